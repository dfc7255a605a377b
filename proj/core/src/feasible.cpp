#include "attrsel/feasible.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "attrsel/error.hpp"

namespace attrsel {

namespace {
const std::vector<AttrIndex> kEmpty;
}

FeasibleSets::FeasibleSets(std::size_t num_attributes, std::vector<std::vector<AttrIndex>> sets)
    : num_attributes_(num_attributes), sets_(std::move(sets)) {
  for (auto& s : sets_) {
    normalize_index_set(s);
    if (!s.empty() && s.back() >= num_attributes_) {
      throw DataError("feasible set references attribute index " + std::to_string(s.back()) +
                      " >= A=" + std::to_string(num_attributes_));
    }
  }
}

const std::vector<AttrIndex>& FeasibleSets::of(ObjectIndex o) const {
  return o < sets_.size() ? sets_[o] : kEmpty;
}

bool FeasibleSets::contains(ObjectIndex o, AttrIndex a) const {
  const auto& s = of(o);
  return std::binary_search(s.begin(), s.end(), a);
}

FeasibleSets build_feasible(const Dataset& train, FeasibleOptions opts) {
  const std::size_t n_attr = train.num_attributes();
  std::vector<std::vector<char>> seen(train.objects.size(), std::vector<char>(n_attr, 0));
  for (const auto& inst : train.instances) {
    for (AttrIndex a : inst.positives) seen[inst.object][a] = 1;
    if (opts.include_negatives) {
      for (AttrIndex a : inst.negatives) seen[inst.object][a] = 1;
    }
  }
  std::vector<std::vector<AttrIndex>> sets(train.objects.size());
  for (std::size_t o = 0; o < sets.size(); ++o) {
    for (AttrIndex a = 0; a < n_attr; ++a) {
      if (seen[o][a]) sets[o].push_back(a);
    }
  }
  return FeasibleSets(n_attr, std::move(sets));
}

void write_feasible(std::ostream& out, const FeasibleSets& fs, const Dataset& schema) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t o = 0; o < schema.objects.size(); ++o) {
    auto names = nlohmann::ordered_json::array();
    for (AttrIndex a : fs.of(static_cast<ObjectIndex>(o))) names.push_back(schema.vocab.name(a));
    j[schema.objects[o]] = std::move(names);
  }
  out << j.dump(2) << '\n';
}

void write_feasible(const std::filesystem::path& path, const FeasibleSets& fs,
                    const Dataset& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_feasible(out, fs, schema);
}

FeasibleSets read_feasible(std::istream& in, const Dataset& schema) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("feasible sets: parse error: ") + e.what());
  }
  if (!j.is_object()) throw DataError("feasible sets: expected an object map");
  std::vector<std::vector<AttrIndex>> sets(schema.objects.size());
  for (const auto& [object, names] : j.items()) {
    auto oi = schema.find_object(object);
    if (!oi) throw DataError("feasible sets: unknown object '" + object + "'");
    if (!names.is_array()) throw DataError("feasible sets: '" + object + "' is not a list");
    for (const auto& n : names) {
      if (!n.is_string()) throw DataError("feasible sets: malformed entry for '" + object + "'");
      auto ai = schema.vocab.find(n.get<std::string>());
      if (!ai) {
        throw DataError("feasible sets: unknown attribute '" + n.get<std::string>() + "'");
      }
      sets[*oi].push_back(*ai);
    }
  }
  return FeasibleSets(schema.num_attributes(), std::move(sets));
}

FeasibleSets load_feasible(const std::filesystem::path& path, const Dataset& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feasible sets '" + path.string() + "'");
  return read_feasible(in, schema);
}

}  // namespace attrsel
