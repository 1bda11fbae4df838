#include "catgcn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

#include "catgcn/error.hpp"
#include "catgcn/rng.hpp"

namespace catgcn {

std::size_t RawDataset::num_labeled() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](ClassId c) { return c >= 0; }));
}

void RawDataset::validate() const {
  if (features.size() != num_nodes || labels.size() != num_nodes) {
    throw InputError("dataset: per-node arrays do not match num_nodes");
  }
  for (const auto& [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) throw InputError("dataset: edge endpoint out of range");
  }
  for (std::size_t u = 0; u < num_nodes; ++u) {
    if (features[u].empty()) throw InputError("dataset: node " + std::to_string(u) + " has no features");
    for (const auto& f : features[u]) {
      if (f.id >= num_features) throw InputError("dataset: feature id out of range at node " + std::to_string(u));
      if (!std::isfinite(f.weight) || f.weight <= 0.0) {
        throw InputError("dataset: non-positive or non-finite weight at node " + std::to_string(u));
      }
    }
    if (labels[u] != kUnlabeled && (labels[u] < 0 || static_cast<std::size_t>(labels[u]) >= num_classes)) {
      throw InputError("dataset: class out of range at node " + std::to_string(u));
    }
  }
}

namespace {

bool skip_line(std::string_view line) { return line.empty() || line.front() == '#'; }

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

// Splits on runs of tabs/spaces.
std::vector<std::string_view> fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

struct Line {
  std::size_t number;
  std::string text;
};

std::vector<Line> read_lines(std::istream& in) {
  std::vector<Line> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    const std::string_view t = trim(text);
    if (skip_line(t)) continue;
    lines.push_back({number, std::string(t)});
  }
  return lines;
}

NodeId parse_node(std::string_view tok, const std::string& file, std::size_t line) {
  NodeId id = 0;
  if (!parse_number(tok, id)) throw ParseError(file, line, "invalid node id '" + std::string(tok) + "'");
  return id;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

void write_double(std::ostream& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

}  // namespace

RawDataset read_dataset(std::istream& edges_in, std::istream& features_in, std::istream& labels_in,
                        LoadDiagnostics* diagnostics, const std::string& edges_name,
                        const std::string& features_name, const std::string& labels_name) {
  RawDataset ds;
  LoadDiagnostics diag;

  // Features define the node set: ids 0..max must all be present.
  struct NodeLine {
    NodeId node;
    std::size_t line;
    std::vector<FeatureEntry> entries;
  };
  std::vector<NodeLine> feature_lines;
  std::size_t max_node = 0;
  FeatureId max_feature = 0;
  bool any_feature = false;
  for (const auto& [number, text] : read_lines(features_in)) {
    const auto toks = fields(text);
    if (toks.empty()) continue;
    NodeLine nl{parse_node(toks[0], features_name, number), number, {}};
    for (std::size_t t = 1; t < toks.size(); ++t) {
      std::string_view tok = toks[t];
      FeatureEntry e;
      const auto colon = tok.find(':');
      if (!parse_number(tok.substr(0, colon), e.id)) {
        throw ParseError(features_name, number, "invalid feature id in token '" + std::string(tok) + "'");
      }
      if (colon != std::string_view::npos) {
        if (!parse_number(tok.substr(colon + 1), e.weight)) {
          throw ParseError(features_name, number, "invalid feature weight in token '" + std::string(tok) + "'");
        }
        if (!std::isfinite(e.weight) || e.weight <= 0.0) {
          throw ParseError(features_name, number, "feature weight must be finite and positive");
        }
      }
      max_feature = std::max(max_feature, e.id);
      any_feature = true;
      nl.entries.push_back(e);
    }
    diag.feature_tokens += nl.entries.size();
    max_node = std::max<std::size_t>(max_node, nl.node);
    feature_lines.push_back(std::move(nl));
  }
  if (feature_lines.empty()) throw InputError(features_name + ": no nodes");

  ds.num_nodes = max_node + 1;
  ds.num_features = any_feature ? static_cast<std::size_t>(max_feature) + 1 : 0;
  ds.features.assign(ds.num_nodes, {});
  for (auto& nl : feature_lines) {
    auto& dst = ds.features[nl.node];
    dst.insert(dst.end(), nl.entries.begin(), nl.entries.end());
  }
  for (std::size_t u = 0; u < ds.num_nodes; ++u) {
    auto& f = ds.features[u];
    if (f.empty()) throw InputError(features_name + ": node " + std::to_string(u) + " has an empty feature list");
    std::stable_sort(f.begin(), f.end(), [](const FeatureEntry& a, const FeatureEntry& b) { return a.id < b.id; });
    const auto before = f.size();
    f.erase(std::unique(f.begin(), f.end(), [](const FeatureEntry& a, const FeatureEntry& b) { return a.id == b.id; }),
            f.end());
    diag.duplicate_feature_tokens += before - f.size();
  }

  for (const auto& [number, text] : read_lines(edges_in)) {
    const auto toks = fields(text);
    if (toks.size() != 2) throw ParseError(edges_name, number, "expected 'u<TAB>v'");
    const NodeId u = parse_node(toks[0], edges_name, number);
    const NodeId v = parse_node(toks[1], edges_name, number);
    if (u >= ds.num_nodes || v >= ds.num_nodes) {
      throw ParseError(edges_name, number,
                       "dangling node id (dataset has " + std::to_string(ds.num_nodes) + " nodes)");
    }
    ds.edges.emplace_back(u, v);
  }

  ds.labels.assign(ds.num_nodes, kUnlabeled);
  ClassId max_class = -1;
  for (const auto& [number, text] : read_lines(labels_in)) {
    const auto toks = fields(text);
    if (toks.size() != 2) throw ParseError(labels_name, number, "expected 'node<TAB>class'");
    const NodeId u = parse_node(toks[0], labels_name, number);
    ClassId c = 0;
    if (!parse_number(toks[1], c) || c < 0) throw ParseError(labels_name, number, "invalid class id");
    if (u >= ds.num_nodes) {
      throw ParseError(labels_name, number, "dangling node id (dataset has " + std::to_string(ds.num_nodes) + " nodes)");
    }
    if (ds.labels[u] != kUnlabeled && ds.labels[u] != c) {
      throw ParseError(labels_name, number, "conflicting label for node " + std::to_string(u));
    }
    ds.labels[u] = c;
    max_class = std::max(max_class, c);
  }
  ds.num_classes = static_cast<std::size_t>(max_class + 1);

  build_adjacency(ds.edges, ds.num_nodes, diag.edges);
  diag.nodes = ds.num_nodes;
  diag.features = ds.num_features;
  diag.classes = ds.num_classes;
  diag.labeled = ds.num_labeled();
  if (diagnostics) *diagnostics = diag;
  return ds;
}

RawDataset load_dataset(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                        const std::filesystem::path& labels_path, LoadDiagnostics* diagnostics) {
  auto e = open_input(edges_path);
  auto f = open_input(features_path);
  auto l = open_input(labels_path);
  return read_dataset(e, f, l, diagnostics, edges_path.string(), features_path.string(), labels_path.string());
}

void write_dataset(const RawDataset& ds, std::ostream& edges, std::ostream& features, std::ostream& labels) {
  std::vector<Edge> canon;
  canon.reserve(ds.edges.size());
  for (auto [u, v] : ds.edges) {
    if (u == v) continue;
    canon.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
  for (const auto& [u, v] : canon) edges << u << '\t' << v << '\n';

  for (std::size_t u = 0; u < ds.num_nodes; ++u) {
    features << u << '\t';
    bool first = true;
    for (const auto& f : ds.features[u]) {
      if (!first) features << ' ';
      first = false;
      features << f.id;
      if (f.weight != 1.0) {
        features << ':';
        write_double(features, f.weight);
      }
    }
    features << '\n';
  }

  for (std::size_t u = 0; u < ds.num_nodes; ++u)
    if (ds.labels[u] != kUnlabeled) labels << u << '\t' << ds.labels[u] << '\n';
}

void write_dataset(const RawDataset& ds, const std::filesystem::path& edges_path,
                   const std::filesystem::path& features_path, const std::filesystem::path& labels_path) {
  std::ofstream e(edges_path, std::ios::binary);
  std::ofstream f(features_path, std::ios::binary);
  std::ofstream l(labels_path, std::ios::binary);
  if (!e || !f || !l) throw InputError("cannot open dataset output files for writing");
  write_dataset(ds, e, f, l);
}

std::uint64_t fingerprint(const RawDataset& ds) {
  std::ostringstream e, f, l;
  write_dataset(ds, e, f, l);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const std::string& s : {e.str(), std::string("\x1f"), f.str(), std::string("\x1f"), l.str()}) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

SplitSizes split_sizes(std::size_t labeled) {
  SplitSizes s;
  s.val = labeled / 10;
  s.test = labeled / 10;
  s.train = labeled - s.val - s.test;
  return s;
}

SplitAssignment make_split(const RawDataset& dataset, std::uint64_t seed) {
  std::vector<NodeId> ids;
  for (std::size_t u = 0; u < dataset.num_nodes; ++u)
    if (dataset.labels[u] != kUnlabeled) ids.push_back(static_cast<NodeId>(u));
  if (ids.size() < 10) {
    throw InputError("make_split: need at least 10 labeled nodes, have " + std::to_string(ids.size()));
  }

  CounterRng rng = CounterRng(seed).split(streams::kSplit);
  for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);

  const SplitSizes sizes = split_sizes(ids.size());
  SplitAssignment split;
  split.seed = seed;
  const auto a = ids.begin();
  split.test_ids.assign(a, a + static_cast<std::ptrdiff_t>(sizes.test));
  split.val_ids.assign(a + static_cast<std::ptrdiff_t>(sizes.test),
                       a + static_cast<std::ptrdiff_t>(sizes.test + sizes.val));
  split.train_ids.assign(a + static_cast<std::ptrdiff_t>(sizes.test + sizes.val), ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.val_ids.begin(), split.val_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

FeatureSample sample_features(const RawDataset& dataset, std::size_t n_f, std::uint64_t seed) {
  if (n_f == 0) throw ContractError("sample_features: n_f must be at least 1");
  FeatureSample sample;
  sample.num_nodes = dataset.num_nodes;
  sample.n_f = n_f;
  sample.seed = seed;
  sample.entries.resize(dataset.num_nodes * n_f);

  const CounterRng base = CounterRng(seed).split(streams::kFeatureSample);
  std::vector<FeatureEntry> pool;
  for (std::size_t u = 0; u < dataset.num_nodes; ++u) {
    CounterRng rng = base.split(u);
    pool = dataset.features[u];
    const std::size_t m = pool.size();
    FeatureEntry* out = sample.entries.data() + u * n_f;
    // Partial Fisher-Yates: the first min(m, n_f) slots become a uniform
    // ordered draw without replacement.
    const std::size_t take = std::min(m, n_f);
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(m - i)]);
      out[i] = pool[i];
    }
    for (std::size_t i = take; i < n_f; ++i) out[i] = pool[rng.below(m)];
  }
  return sample;
}

Dataset prepare_dataset(RawDataset raw, std::size_t n_f, std::uint64_t seed) {
  raw.validate();
  Dataset ds;
  const CsrMatrix adj = build_adjacency(raw.edges, raw.num_nodes, ds.adjacency_stats);
  auto normalized = normalize_sym(adj);
  ds.norm_adj = std::move(normalized.matrix);
  ds.degrees = std::move(normalized.degrees);
  ds.sample = sample_features(raw, n_f, seed);
  ds.split = make_split(raw, seed);
  ds.raw = std::move(raw);
  return ds;
}

}  // namespace catgcn
