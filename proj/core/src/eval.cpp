#include "attrsel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attrsel/error.hpp"

namespace attrsel {

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const Label> labels, bool interpolated) {
  if (scores.size() != labels.size()) throw DataError("average_precision: size mismatch");
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Label::kUnannotated) continue;
    if (!std::isfinite(scores[i])) throw DataError("average_precision: non-finite score");
    idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });

  std::vector<double> precisions;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (labels[idx[r]] == Label::kPositive) {
      ++tp;
      precisions.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    }
  }
  if (precisions.empty()) return std::nullopt;
  if (interpolated) {
    for (std::size_t k = precisions.size() - 1; k-- > 0;) {
      precisions[k] = std::max(precisions[k], precisions[k + 1]);
    }
  }
  return std::accumulate(precisions.begin(), precisions.end(), 0.0) /
         static_cast<double>(precisions.size());
}

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::kHead: return "head";
    case Bucket::kMedium: return "medium";
    case Bucket::kTail: return "tail";
  }
  return "?";
}

std::vector<Bucket> partition_by_counts(std::span<const std::size_t> positive_counts,
                                        const ImbalanceThresholds& t) {
  if (!(t.head_min > t.tail_max)) {
    throw ConfigError("head_min must be greater than tail_max");
  }
  std::vector<Bucket> out;
  out.reserve(positive_counts.size());
  for (std::size_t c : positive_counts) {
    out.push_back(c >= t.head_min ? Bucket::kHead
                                  : (c <= t.tail_max ? Bucket::kTail : Bucket::kMedium));
  }
  return out;
}

std::vector<Bucket> partition_head_medium_tail(const Dataset& train,
                                               const ImbalanceThresholds& thresholds) {
  std::vector<std::size_t> counts(train.num_attributes(), 0);
  for (const auto& inst : train.instances) {
    for (AttrIndex a : inst.positives) ++counts[a];
  }
  return partition_by_counts(counts, thresholds);
}

EvalReport mean_ap(const ScoreMatrix& predictions, const Dataset& test,
                   std::span<const Bucket> buckets, const EvalOptions& opts) {
  const std::size_t n = test.instances.size();
  const std::size_t n_attr = test.num_attributes();
  if (n == 0) throw DataError("evaluation: empty test set");
  if (predictions.rows != n || predictions.cols != n_attr) {
    throw DataError("evaluation: prediction matrix is " + std::to_string(predictions.rows) + "x" +
                    std::to_string(predictions.cols) + ", test set needs " + std::to_string(n) +
                    "x" + std::to_string(n_attr));
  }
  if (buckets.size() != n_attr) throw DataError("evaluation: bucket list size mismatch");

  EvalReport report;
  report.per_attribute_ap.resize(n_attr);
  report.counts.resize(n_attr);
  report.buckets.assign(buckets.begin(), buckets.end());

  // Column-major label view built once.
  std::vector<Label> labels(n * n_attr, Label::kUnannotated);
  for (std::size_t i = 0; i < n; ++i) {
    for (AttrIndex a : test.instances[i].positives) labels[a * n + i] = Label::kPositive;
    for (AttrIndex a : test.instances[i].negatives) labels[a * n + i] = Label::kNegative;
  }
  std::vector<double> column(n);
  for (std::size_t a = 0; a < n_attr; ++a) {
    for (std::size_t i = 0; i < n; ++i) column[i] = predictions.at(i, a);
    const std::span<const Label> col_labels(labels.data() + a * n, n);
    for (Label l : col_labels) {
      if (l == Label::kPositive) ++report.counts[a].positives;
      if (l == Label::kNegative) ++report.counts[a].negatives;
    }
    report.per_attribute_ap[a] = average_precision(column, col_labels, opts.interpolated);
    if (!report.per_attribute_ap[a]) report.excluded.push_back(static_cast<AttrIndex>(a));
  }

  auto group_mean = [&](auto&& member) -> std::optional<double> {
    double sum = 0.0;
    std::size_t k = 0;
    for (std::size_t a = 0; a < n_attr; ++a) {
      if (report.per_attribute_ap[a] && member(static_cast<AttrIndex>(a))) {
        sum += *report.per_attribute_ap[a];
        ++k;
      }
    }
    if (k == 0) return std::nullopt;
    return sum / static_cast<double>(k);
  };

  auto overall = group_mean([](AttrIndex) { return true; });
  if (!overall) throw DataError("evaluation: no attribute has an annotated positive");
  report.overall_map = *overall;
  for (std::size_t b = 0; b < 3; ++b) {
    report.imbalance[b] =
        group_mean([&](AttrIndex a) { return buckets[a] == static_cast<Bucket>(b); });
  }
  for (std::size_t t = 0; t < kNumAttributeTypes; ++t) {
    report.by_type[t] = group_mean(
        [&](AttrIndex a) { return test.vocab.type_of(a) == static_cast<AttributeType>(t); });
  }
  return report;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void write_report_json(std::ostream& out, const EvalReport& report, const Dataset& schema) {
  nlohmann::ordered_json j;
  j["overall_map"] = report.overall_map;
  nlohmann::ordered_json imb;
  for (std::size_t b = 0; b < 3; ++b) {
    imb[std::string(to_string(static_cast<Bucket>(b)))] = opt_json(report.imbalance[b]);
  }
  j["imbalance"] = std::move(imb);
  nlohmann::ordered_json types;
  for (std::size_t t = 0; t < kNumAttributeTypes; ++t) {
    types[std::string(to_string(static_cast<AttributeType>(t)))] = opt_json(report.by_type[t]);
  }
  j["by_type"] = std::move(types);
  auto attrs = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < report.per_attribute_ap.size(); ++a) {
    nlohmann::ordered_json rec;
    rec["name"] = schema.vocab.name(static_cast<AttrIndex>(a));
    rec["type"] = to_string(schema.vocab.type_of(static_cast<AttrIndex>(a)));
    rec["bucket"] = to_string(report.buckets[a]);
    rec["ap"] = opt_json(report.per_attribute_ap[a]);
    rec["n_pos"] = report.counts[a].positives;
    rec["n_neg"] = report.counts[a].negatives;
    attrs.push_back(std::move(rec));
  }
  j["attributes"] = std::move(attrs);
  auto excluded = nlohmann::ordered_json::array();
  for (AttrIndex a : report.excluded) excluded.push_back(schema.vocab.name(a));
  j["excluded_no_positives"] = std::move(excluded);
  out << j.dump(2) << '\n';
}

std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows) {
  static constexpr std::array<const char*, 12> kColumns = {
      "Overall", "Head",    "Medium", "Tail",   "Color", "Material",
      "Shape",   "Size",    "Texture", "Action", "State", "Others"};
  std::size_t name_width = 7;
  for (const auto& [name, r] : rows) name_width = std::max(name_width, name.size());

  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
    return std::string(buf);
  };
  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w) {
    os << std::string(w > s.size() ? w - s.size() : 0, ' ') << s;
  };
  os << std::string("Method") << std::string(name_width - 6 + 1, ' ') << '|';
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    pad(kColumns[c], 9);
    if (c == 0 || c == 3) os << " |";
  }
  os << '\n';
  const std::size_t width = name_width + 2 + 9 * kColumns.size() + 4;
  os << std::string(width, '-') << '\n';
  for (const auto& [name, r] : rows) {
    os << name << std::string(name_width - name.size() + 1, ' ') << '|';
    std::vector<std::string> cells;
    cells.push_back(cell(r.overall_map));
    for (const auto& v : r.imbalance) cells.push_back(cell(v));
    for (const auto& v : r.by_type) cells.push_back(cell(v));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      pad(cells[c], 9);
      if (c == 0 || c == 3) os << " |";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace attrsel
