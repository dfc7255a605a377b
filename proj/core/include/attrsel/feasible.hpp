#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "attrsel/dataset.hpp"

namespace attrsel {

/// Per-object feasible attribute sets, indexed by the dataset's object order.
class FeasibleSets {
 public:
  FeasibleSets() = default;
  FeasibleSets(std::size_t num_attributes, std::vector<std::vector<AttrIndex>> sets);

  /// Sorted feasible set of object `o`; empty for objects never seen in training.
  const std::vector<AttrIndex>& of(ObjectIndex o) const;
  bool contains(ObjectIndex o, AttrIndex a) const;
  std::size_t num_objects() const { return sets_.size(); }
  std::size_t num_attributes() const { return num_attributes_; }

  friend bool operator==(const FeasibleSets&, const FeasibleSets&) = default;

 private:
  std::size_t num_attributes_ = 0;
  std::vector<std::vector<AttrIndex>> sets_;
};

struct FeasibleOptions {
  /// Also count negative annotations as co-occurrence evidence.
  bool include_negatives = false;
  friend bool operator==(const FeasibleOptions&, const FeasibleOptions&) = default;
};

FeasibleSets build_feasible(const Dataset& train, FeasibleOptions opts = {});

/// Membership test; out-of-range objects are treated as unknown (empty set).
inline bool is_feasible(const FeasibleSets& fs, ObjectIndex o, AttrIndex a) {
  return fs.contains(o, a);
}

// Text form: one JSON object mapping object name -> sorted attribute names.
void write_feasible(std::ostream& out, const FeasibleSets& fs, const Dataset& schema);
void write_feasible(const std::filesystem::path& path, const FeasibleSets& fs,
                    const Dataset& schema);
/// Objects missing from the file get empty sets; names unknown to `schema`
/// raise DataError.
FeasibleSets read_feasible(std::istream& in, const Dataset& schema);
FeasibleSets load_feasible(const std::filesystem::path& path, const Dataset& schema);

}  // namespace attrsel
