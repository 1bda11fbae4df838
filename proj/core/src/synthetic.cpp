#include "catgcn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"

#include "catgcn/error.hpp"
#include "catgcn/rng.hpp"

namespace catgcn {

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kLocalSignal: return "local-signal";
    case SyntheticKind::kGlobalSignal: return "global-signal";
    case SyntheticKind::kHomophily: return "homophily";
  }
  return "unknown";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "local-signal") return SyntheticKind::kLocalSignal;
  if (name == "global-signal") return SyntheticKind::kGlobalSignal;
  if (name == "homophily") return SyntheticKind::kHomophily;
  throw ContractError("unknown synthetic kind '" + std::string(name) + "'");
}

namespace {

// k distinct ids drawn uniformly from [lo, hi) \ exclude, appended to out.
void draw_distinct(CounterRng& rng, std::size_t lo, std::size_t hi, std::size_t k,
                   std::vector<FeatureEntry>& out, std::unordered_set<FeatureId>& taken) {
  while (k > 0) {
    const auto id = static_cast<FeatureId>(lo + rng.below(hi - lo));
    if (taken.insert(id).second) {
      out.push_back({id, 1.0});
      --k;
    }
  }
}

void check_spec(const SyntheticSpec& s) {
  if (s.n_classes < 2) throw ContractError("synthetic: need at least 2 classes");
  if (s.n_nodes < 1) throw ContractError("synthetic: need at least 1 node");
  if (s.n_f < 1) throw ContractError("synthetic: need at least 1 feature per node");
  if (!(0.0 <= s.p_out && s.p_out <= s.p_in && s.p_in <= 1.0)) {
    throw ContractError("synthetic: require 0 <= p_out <= p_in <= 1");
  }
  switch (s.kind) {
    case SyntheticKind::kLocalSignal:
      if (2 * s.n_classes > s.n_feats) throw ContractError("synthetic local-signal: 2*classes exceeds features");
      if (s.n_f < 2) throw ContractError("synthetic local-signal: need at least 2 features per node");
      if (s.n_feats - 2 * s.n_classes < s.n_f - 2) {
        throw ContractError("synthetic local-signal: not enough noise features for n_f");
      }
      break;
    case SyntheticKind::kGlobalSignal: {
      const std::size_t group = s.n_feats / s.n_classes;
      const auto in = static_cast<std::size_t>(std::lround(kGlobalSignalShare * static_cast<double>(s.n_f)));
      if (group < in || s.n_feats - (group + 1) < s.n_f - in) {
        throw ContractError("synthetic global-signal: feature groups too small for n_f");
      }
      break;
    }
    case SyntheticKind::kHomophily:
      if (s.n_feats < s.n_f) throw ContractError("synthetic homophily: n_f exceeds features");
      break;
  }
}

}  // namespace

RawDataset generate_synthetic(const SyntheticSpec& spec) {
  check_spec(spec);
  const std::size_t n = spec.n_nodes;
  const std::size_t c = spec.n_classes;
  const std::size_t d = spec.n_feats;

  RawDataset ds;
  ds.num_nodes = n;
  ds.num_features = d;
  ds.num_classes = c;
  ds.labels.resize(n);
  ds.features.resize(n);

  const CounterRng root = CounterRng(spec.seed).split(streams::kSynthetic);
  CounterRng label_rng = root.split(1);
  for (auto& y : ds.labels) y = static_cast<ClassId>(label_rng.below(c));

  // Feature group of id f for global-signal: contiguous near-equal blocks.
  const auto group_begin = [&](std::size_t g) { return g * d / c; };

  const CounterRng feature_root = root.split(2);
  std::unordered_set<FeatureId> taken;
  for (std::size_t u = 0; u < n; ++u) {
    CounterRng rng = feature_root.split(u);
    const auto y = static_cast<std::size_t>(ds.labels[u]);
    auto& f = ds.features[u];
    taken.clear();
    switch (spec.kind) {
      case SyntheticKind::kLocalSignal: {
        // Signal ids: a_i = i and b_j = C + j. The node carries one a and one
        // b with (i + j) mod C == label, so each class owns a perfect
        // matching of C disjoint (a, b) pairs and neither member alone says
        // anything about the label.
        const std::size_t i = rng.below(c);
        const std::size_t j = (y + c - i) % c;
        f.push_back({static_cast<FeatureId>(i), 1.0});
        f.push_back({static_cast<FeatureId>(c + j), 1.0});
        taken.insert(static_cast<FeatureId>(i));
        taken.insert(static_cast<FeatureId>(c + j));
        draw_distinct(rng, 2 * c, d, spec.n_f - 2, f, taken);
        break;
      }
      case SyntheticKind::kGlobalSignal: {
        const auto in = static_cast<std::size_t>(std::lround(kGlobalSignalShare * static_cast<double>(spec.n_f)));
        const std::size_t lo = group_begin(y), hi = group_begin(y + 1);
        draw_distinct(rng, lo, hi, in, f, taken);
        // Remaining ids come from outside the node's own group.
        std::size_t k = spec.n_f - in;
        while (k > 0) {
          auto id = static_cast<FeatureId>(rng.below(d - (hi - lo)));
          if (id >= lo) id += static_cast<FeatureId>(hi - lo);
          if (taken.insert(id).second) {
            f.push_back({id, 1.0});
            --k;
          }
        }
        break;
      }
      case SyntheticKind::kHomophily:
        draw_distinct(rng, 0, d, spec.n_f, f, taken);
        break;
    }
    std::sort(f.begin(), f.end(), [](const FeatureEntry& a, const FeatureEntry& b) { return a.id < b.id; });
  }

  CounterRng edge_rng = root.split(3);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = ds.labels[u] == ds.labels[v] ? spec.p_in : spec.p_out;
      if (edge_rng.bernoulli(p)) ds.edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  }
  return ds;
}

void write_synthetic(const RawDataset& dataset, const SyntheticSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset(dataset, dir / "edges.tsv", dir / "features.tsv", dir / "labels.tsv");

  nlohmann::ordered_json meta;
  meta["kind"] = to_string(spec.kind);
  meta["nodes"] = dataset.num_nodes;
  meta["features"] = dataset.num_features;
  meta["classes"] = dataset.num_classes;
  meta["edges"] = dataset.edges.size();
  meta["features_per_node"] = spec.n_f;
  meta["p_in"] = spec.p_in;
  meta["p_out"] = spec.p_out;
  meta["seed"] = spec.seed;
  std::ofstream out(dir / "meta.json", std::ios::binary);
  if (!out) throw InputError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

}  // namespace catgcn
