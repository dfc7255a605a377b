#include "attrsel/vlm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "attrsel/error.hpp"
#include "binary_io.hpp"

namespace attrsel {

namespace {

constexpr char kEmbeddingMagic[8] = {'A', 'T', 'S', 'E', 'M', 'B', '0', '1'};

using ojson = nlohmann::ordered_json;

}  // namespace

std::vector<double> EmbeddingTable::normalized(std::span<const float> v,
                                               const std::string& what) const {
  if (v.size() != dim_) {
    throw DataError(what + ": dimension " + std::to_string(v.size()) + " != table dimension " +
                    std::to_string(dim_));
  }
  double sq = 0.0;
  for (float f : v) {
    if (!std::isfinite(f)) throw DataError(what + ": non-finite component");
    sq += static_cast<double>(f) * f;
  }
  if (!(sq > 0.0)) throw DataError(what + ": zero vector cannot be normalized");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]) * inv;
  return out;
}

void EmbeddingTable::add_visual(std::string instance_id, std::span<const float> v) {
  auto n = normalized(v, "visual embedding '" + instance_id + "'");
  visual_.insert_or_assign(std::move(instance_id), std::move(n));
}

void EmbeddingTable::add_text(std::string attribute, std::string object,
                              std::span<const float> v) {
  auto n = normalized(v, "text embedding ('" + attribute + "', '" + object + "')");
  text_.insert_or_assign({std::move(attribute), std::move(object)}, std::move(n));
}

const std::vector<double>* EmbeddingTable::visual(const std::string& instance_id) const {
  auto it = visual_.find(instance_id);
  return it == visual_.end() ? nullptr : &it->second;
}

const std::vector<double>* EmbeddingTable::text(const std::string& attribute,
                                                const std::string& object) const {
  auto it = text_.find({attribute, object});
  return it == text_.end() ? nullptr : &it->second;
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out.write(kEmbeddingMagic, sizeof kEmbeddingMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(table.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(table.visual_entries().size()));
  detail::put_u32(out, static_cast<std::uint32_t>(table.text_entries().size()));
  auto put_vec = [&](const std::vector<double>& v) {
    detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
    for (double x : v) detail::put_f32(out, static_cast<float>(x));
  };
  for (const auto& [id, v] : table.visual_entries()) {
    detail::put_string(out, id);
    put_vec(v);
  }
  for (const auto& [key, v] : table.text_entries()) {
    detail::put_string(out, key.first);
    detail::put_string(out, key.second);
    put_vec(v);
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_embeddings(out, table);
}

EmbeddingTable read_embeddings(std::istream& in) {
  char magic[8];
  detail::read_exact(in, magic, sizeof magic, "embedding header");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kEmbeddingMagic))) {
    throw DataError("not an embedding file (bad magic)");
  }
  const std::uint32_t dim = detail::get_u32(in, "embedding header");
  const std::uint32_t n_visual = detail::get_u32(in, "embedding header");
  const std::uint32_t n_text = detail::get_u32(in, "embedding header");
  if (dim == 0) throw DataError("embedding dimension must be positive");

  EmbeddingTable table(dim);
  std::vector<float> buf;
  auto get_vec = [&](const char* what) {
    const std::uint32_t d = detail::get_u32(in, what);
    if (d != dim) {
      throw DataError(std::string(what) + ": dimension mismatch (" + std::to_string(d) +
                      " vs header " + std::to_string(dim) + ")");
    }
    buf.resize(d);
    for (auto& f : buf) f = detail::get_f32(in, what);
  };
  for (std::uint32_t i = 0; i < n_visual; ++i) {
    auto id = detail::get_string(in, "visual record");
    get_vec("visual record");
    table.add_visual(std::move(id), buf);
  }
  for (std::uint32_t i = 0; i < n_text; ++i) {
    auto attribute = detail::get_string(in, "text record");
    auto object = detail::get_string(in, "text record");
    get_vec("text record");
    table.add_text(std::move(attribute), std::move(object), buf);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings '" + path.string() + "'");
  return read_embeddings(in);
}

double similarity(std::span<const double> visual, std::span<const double> text) {
  if (visual.size() != text.size()) {
    throw DataError("similarity: dimension mismatch (" + std::to_string(visual.size()) + " vs " +
                    std::to_string(text.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < visual.size(); ++i) s += visual[i] * text[i];
  return s;
}

void ScoreConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be a positive number");
}

std::vector<double> softmax(std::span<const double> sims, double tau) {
  std::vector<double> out(sims.size());
  if (sims.empty()) return out;
  const double mx = *std::max_element(sims.begin(), sims.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    out[i] = std::exp((sims[i] - mx) / tau);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

double PresenceDistribution::prob(AttrIndex a) const {
  auto it = std::lower_bound(attributes.begin(), attributes.end(), a);
  if (it == attributes.end() || *it != a) return 0.0;
  return probs[static_cast<std::size_t>(it - attributes.begin())];
}

void PresenceTable::insert(PresenceDistribution d) {
  auto id = d.instance_id;
  table_.insert_or_assign(std::move(id), std::move(d));
}

const PresenceDistribution* PresenceTable::find(const std::string& instance_id) const {
  auto it = table_.find(instance_id);
  return it == table_.end() ? nullptr : &it->second;
}

bool PresenceTable::covers(const Dataset& d) const {
  return std::all_of(d.instances.begin(), d.instances.end(),
                     [&](const Instance& i) { return find(i.id) != nullptr; });
}

PresenceDistribution presence_probabilities(const Instance& instance, const Dataset& schema,
                                            const FeasibleSets& fs, const EmbeddingTable& emb,
                                            const ScoreConfig& cfg) {
  cfg.validate();
  PresenceDistribution dist;
  dist.instance_id = instance.id;
  dist.object = instance.object;
  const auto& feasible = fs.of(instance.object);
  if (feasible.empty()) return dist;

  const auto* xv = emb.visual(instance.id);
  if (xv == nullptr) throw DataError("missing visual embedding for instance '" + instance.id + "'");
  const auto& object = schema.objects.at(instance.object);
  std::vector<double> sims;
  sims.reserve(feasible.size());
  for (AttrIndex a : feasible) {
    const auto* t = emb.text(schema.vocab.name(a), object);
    if (t == nullptr) {
      throw DataError("missing text embedding for ('" + schema.vocab.name(a) + "', '" + object +
                      "')");
    }
    sims.push_back(similarity(*xv, *t));
  }
  dist.attributes = feasible;
  dist.probs = softmax(sims, cfg.tau);
  return dist;
}

PresenceTable score_dataset(const Dataset& d, const FeasibleSets& fs, const EmbeddingTable& emb,
                            const ScoreConfig& cfg) {
  PresenceTable table;
  for (const auto& inst : d.instances) table.insert(presence_probabilities(inst, d, fs, emb, cfg));
  return table;
}

PresenceDistribution presence_from_dense(const std::string& instance_id, ObjectIndex object,
                                         std::span<const double> sims, const FeasibleSets& fs,
                                         const ScoreConfig& cfg) {
  cfg.validate();
  PresenceDistribution dist;
  dist.instance_id = instance_id;
  dist.object = object;
  dist.attributes = fs.of(object);
  std::vector<double> restricted;
  restricted.reserve(dist.attributes.size());
  for (AttrIndex a : dist.attributes) {
    if (a >= sims.size()) throw DataError("similarity row too short for '" + instance_id + "'");
    restricted.push_back(sims[a]);
  }
  dist.probs = softmax(restricted, cfg.tau);
  return dist;
}

PresenceTable presence_from_rows(std::span<const SimilarityRow> rows, const FeasibleSets& fs,
                                 const ScoreConfig& cfg) {
  PresenceTable table;
  for (const auto& r : rows) table.insert(presence_from_dense(r.instance_id, r.object, r.sims, fs, cfg));
  return table;
}

void write_scores(std::ostream& out, std::span<const SimilarityRow> rows, const Dataset& schema,
                  const FeasibleSets& fs) {
  for (const auto& r : rows) {
    ojson rec;
    rec["instance_id"] = r.instance_id;
    rec["object"] = schema.objects.at(r.object);
    ojson sims = ojson::object();
    for (AttrIndex a : fs.of(r.object)) sims[schema.vocab.name(a)] = static_cast<float>(r.sims.at(a));
    rec["sims"] = std::move(sims);
    out << rec.dump() << '\n';
  }
}

void write_scores(const std::filesystem::path& path, std::span<const SimilarityRow> rows,
                  const Dataset& schema, const FeasibleSets& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_scores(out, rows, schema, fs);
}

namespace {

// Shared reader for the score and presence files: each record maps the
// feasible attributes of one instance to a number.
template <typename OnRow>
void read_attribute_rows(std::istream& in, const Dataset& schema, const FeasibleSets& fs,
                         const char* field, const char* kind, OnRow on_row) {
  std::unordered_map<std::string, const Instance*> by_id;
  by_id.reserve(schema.instances.size());
  for (const auto& i : schema.instances) by_id.emplace(i.id, &i);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = std::string(kind) + " line " + std::to_string(line_no) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "parse error: " + e.what());
    }
    try {
      const auto id = rec.at("instance_id").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError(where + "unknown instance '" + id + "'");
      const Instance& inst = *it->second;
      const auto object = rec.at("object").get<std::string>();
      if (object != schema.objects.at(inst.object)) {
        throw DataError(where + "object '" + object + "' does not match instance '" + id + "'");
      }
      const auto& feasible = fs.of(inst.object);
      std::vector<double> values(feasible.size());
      std::vector<char> seen(feasible.size(), 0);
      for (const auto& [name, v] : rec.at(field).items()) {
        auto a = schema.vocab.find(name);
        if (!a) throw DataError(where + "unknown attribute '" + name + "'");
        auto pos = std::lower_bound(feasible.begin(), feasible.end(), *a);
        if (pos == feasible.end() || *pos != *a) {
          throw DataError(where + "attribute '" + name + "' is not feasible for object '" +
                          object + "'");
        }
        const double x = v.template get<double>();
        if (!std::isfinite(x)) throw DataError(where + "non-finite value for '" + name + "'");
        const auto k = static_cast<std::size_t>(pos - feasible.begin());
        values[k] = x;
        seen[k] = 1;
      }
      for (std::size_t k = 0; k < feasible.size(); ++k) {
        if (!seen[k]) {
          throw DataError(where + "missing value for feasible attribute '" +
                          schema.vocab.name(feasible[k]) + "'");
        }
      }
      on_row(inst, feasible, std::move(values));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "malformed record: " + e.what());
    }
  }
}

}  // namespace

PresenceTable read_scores(std::istream& in, const Dataset& schema, const FeasibleSets& fs,
                          const ScoreConfig& cfg) {
  cfg.validate();
  PresenceTable table;
  read_attribute_rows(in, schema, fs, "sims", "scores",
                      [&](const Instance& inst, const std::vector<AttrIndex>& feasible,
                          std::vector<double> sims) {
                        PresenceDistribution d;
                        d.instance_id = inst.id;
                        d.object = inst.object;
                        d.attributes = feasible;
                        d.probs = softmax(sims, cfg.tau);
                        table.insert(std::move(d));
                      });
  return table;
}

PresenceTable load_scores(const std::filesystem::path& path, const Dataset& schema,
                          const FeasibleSets& fs, const ScoreConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open scores '" + path.string() + "'");
  return read_scores(in, schema, fs, cfg);
}

void write_presence(std::ostream& out, const PresenceTable& table, const Dataset& schema) {
  for (const auto& inst : schema.instances) {
    const auto* d = table.find(inst.id);
    if (d == nullptr) continue;
    ojson rec;
    rec["instance_id"] = d->instance_id;
    rec["object"] = schema.objects.at(d->object);
    ojson probs = ojson::object();
    for (std::size_t k = 0; k < d->attributes.size(); ++k) {
      probs[schema.vocab.name(d->attributes[k])] = d->probs[k];
    }
    rec["probs"] = std::move(probs);
    out << rec.dump() << '\n';
  }
}

void write_presence(const std::filesystem::path& path, const PresenceTable& table,
                    const Dataset& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_presence(out, table, schema);
}

PresenceTable read_presence(std::istream& in, const Dataset& schema, const FeasibleSets& fs) {
  PresenceTable table;
  read_attribute_rows(in, schema, fs, "probs", "presence",
                      [&](const Instance& inst, const std::vector<AttrIndex>& feasible,
                          std::vector<double> probs) {
                        double sum = 0.0;
                        for (double p : probs) {
                          if (p < 0.0) throw DataError("presence: negative probability");
                          sum += p;
                        }
                        if (!probs.empty() && std::abs(sum - 1.0) > 1e-6) {
                          throw DataError("presence: probabilities of '" + inst.id +
                                          "' do not sum to 1");
                        }
                        PresenceDistribution d;
                        d.instance_id = inst.id;
                        d.object = inst.object;
                        d.attributes = feasible;
                        d.probs = std::move(probs);
                        table.insert(std::move(d));
                      });
  return table;
}

PresenceTable load_presence(const std::filesystem::path& path, const Dataset& schema,
                            const FeasibleSets& fs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open presence file '" + path.string() + "'");
  return read_presence(in, schema, fs);
}

}  // namespace attrsel
