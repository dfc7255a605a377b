#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "attrsel/dataset.hpp"
#include "attrsel/feasible.hpp"

namespace attrsel {

/// Precomputed visual and text embeddings, L2-normalized on insertion.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  /// Throws DataError on dimension mismatch, non-finite or zero vectors.
  void add_visual(std::string instance_id, std::span<const float> v);
  void add_text(std::string attribute, std::string object, std::span<const float> v);

  const std::vector<double>* visual(const std::string& instance_id) const;
  const std::vector<double>* text(const std::string& attribute, const std::string& object) const;

  const std::map<std::string, std::vector<double>>& visual_entries() const { return visual_; }
  const std::map<std::pair<std::string, std::string>, std::vector<double>>& text_entries() const {
    return text_;
  }

 private:
  std::vector<double> normalized(std::span<const float> v, const std::string& what) const;

  std::size_t dim_;
  std::map<std::string, std::vector<double>> visual_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> text_;
};

// Binary little-endian layout:
//   "ATSEMB01" | u32 dim | u32 n_visual | u32 n_text
//   n_visual x { u32 len, id bytes, u32 dim, dim x f32 }
//   n_text   x { u32 len, attribute bytes, u32 len, object bytes, u32 dim, dim x f32 }
void write_embeddings(std::ostream& out, const EmbeddingTable& table);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// Dot product of two unit vectors. Throws DataError on dimension mismatch.
double similarity(std::span<const double> visual, std::span<const double> text);

struct ScoreConfig {
  double tau = 0.01;
  void validate() const;
  friend bool operator==(const ScoreConfig&, const ScoreConfig&) = default;
};

/// Temperature softmax with max subtraction.
std::vector<double> softmax(std::span<const double> sims, double tau);

/// Presence probabilities of one instance over its object's feasible set.
struct PresenceDistribution {
  std::string instance_id;
  ObjectIndex object = 0;
  std::vector<AttrIndex> attributes;  // sorted; equals the feasible set
  std::vector<double> probs;          // parallel to `attributes`

  bool empty() const { return attributes.empty(); }
  /// Probability of `a`, or 0 when a is outside the domain.
  double prob(AttrIndex a) const;
};

class PresenceTable {
 public:
  void insert(PresenceDistribution d);
  const PresenceDistribution* find(const std::string& instance_id) const;
  std::size_t size() const { return table_.size(); }
  bool covers(const Dataset& d) const;

 private:
  std::unordered_map<std::string, PresenceDistribution> table_;
};

PresenceDistribution presence_probabilities(const Instance& instance, const Dataset& schema,
                                            const FeasibleSets& fs, const EmbeddingTable& emb,
                                            const ScoreConfig& cfg);
PresenceTable score_dataset(const Dataset& d, const FeasibleSets& fs, const EmbeddingTable& emb,
                            const ScoreConfig& cfg);

/// Softmax over the feasible set of a dense per-attribute similarity row.
PresenceDistribution presence_from_dense(const std::string& instance_id, ObjectIndex object,
                                         std::span<const double> sims, const FeasibleSets& fs,
                                         const ScoreConfig& cfg);
PresenceTable presence_from_rows(std::span<const SimilarityRow> rows, const FeasibleSets& fs,
                                 const ScoreConfig& cfg);

// Score file: one record per line
//   {"instance_id":..,"object":..,"sims":{"<attribute>":f32,...}}
// restricted to the feasible set of the instance's object.
void write_scores(std::ostream& out, std::span<const SimilarityRow> rows, const Dataset& schema,
                  const FeasibleSets& fs);
void write_scores(const std::filesystem::path& path, std::span<const SimilarityRow> rows,
                  const Dataset& schema, const FeasibleSets& fs);
/// Rows must name known instances and cover exactly the feasible set of the
/// instance's object; violations raise DataError.
PresenceTable read_scores(std::istream& in, const Dataset& schema, const FeasibleSets& fs,
                          const ScoreConfig& cfg);
PresenceTable load_scores(const std::filesystem::path& path, const Dataset& schema,
                          const FeasibleSets& fs, const ScoreConfig& cfg);

// Presence file (cached scoring output):
//   {"instance_id":..,"object":..,"probs":{"<attribute>":p,...}}
void write_presence(std::ostream& out, const PresenceTable& table, const Dataset& schema);
void write_presence(const std::filesystem::path& path, const PresenceTable& table,
                    const Dataset& schema);
PresenceTable read_presence(std::istream& in, const Dataset& schema, const FeasibleSets& fs);
PresenceTable load_presence(const std::filesystem::path& path, const Dataset& schema,
                            const FeasibleSets& fs);

}  // namespace attrsel
