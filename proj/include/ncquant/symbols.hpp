#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncquant {

enum class SymbolKind {
    Constant,   // declared system constant, generic and invertible
    FreeParam,  // solver-introduced unknown / surviving family parameter
};

/// Registry of scalar-level symbols (system constants and free parameters).
/// Symbol ids are indices in declaration order; polynomials refer to symbols
/// only by id, so the table may grow while values are alive.
class SymbolTable {
  public:
    int declare(const std::string& name, SymbolKind kind) {
        if (find(name)) throw std::invalid_argument("symbol redeclared: " + name);
        entries_.push_back({name, kind});
        return static_cast<int>(entries_.size()) - 1;
    }

    std::optional<int> find(const std::string& name) const {
        for (size_t k = 0; k < entries_.size(); ++k)
            if (entries_[k].name == name) return static_cast<int>(k);
        return std::nullopt;
    }

    const std::string& name(int id) const { return entries_.at(id).name; }
    SymbolKind kind(int id) const { return entries_.at(id).kind; }
    bool is_free_param(int id) const { return kind(id) == SymbolKind::FreeParam; }
    int size() const { return static_cast<int>(entries_.size()); }

    /// Reinterprets a free parameter as a generic invertible constant.
    /// Used when a surviving family parameter is promoted to part of the
    /// coefficient field for a follow-up computation.
    void promote_to_constant(int id) { entries_.at(id).kind = SymbolKind::Constant; }

    void rename(int id, const std::string& name) {
        if (find(name)) throw std::invalid_argument("symbol rename collides: " + name);
        entries_.at(id).name = name;
    }

  private:
    struct Entry {
        std::string name;
        SymbolKind kind;
    };
    std::vector<Entry> entries_;
};

}  // namespace ncquant
