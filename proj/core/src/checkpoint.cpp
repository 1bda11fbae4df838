#include "catgcn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "catgcn/error.hpp"
#include "catgcn/version.hpp"
#include "json.hpp"

namespace catgcn {

namespace {

constexpr std::string_view kMagic = "CATGCNCK";
constexpr std::size_t kPreamble = 8 + 4 + 8;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  using nlohmann::ordered_json;
  const ModelShapes shapes = ckpt.params.shapes();
  ordered_json header;
  header["library_version"] = ckpt.library_version.empty() ? std::string(kVersion) : ckpt.library_version;
  header["config"] = ordered_json::parse(to_json(ckpt.config));
  header["shapes"] = {{"num_features", shapes.num_features}, {"emb_dim", shapes.emb_dim},
                      {"hidden_dim", shapes.hidden_dim},     {"num_classes", shapes.num_classes},
                      {"projection_hidden", shapes.projection_hidden}};
  header["dropout"] = ckpt.params.dropout;
  header["dataset_fingerprint"] = ckpt.dataset_fingerprint;
  header["best_epoch"] = ckpt.best_epoch;
  ordered_json sections = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.params.tensors()) {
    sections.push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}, {"offset", offset}});
    offset += t->size() * sizeof(double);
  }
  header["tensors"] = std::move(sections);
  const std::string text = header.dump();

  std::string out;
  out.reserve(kPreamble + text.size() + offset);
  out.append(kMagic);
  put_le(out, kCheckpointVersion, 4);
  put_le(out, text.size(), 8);
  out.append(text);
  for (const auto& [name, t] : ckpt.params.tensors())
    for (double v : t->values()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  using nlohmann::json;
  if (bytes.size() < kPreamble || bytes.substr(0, kMagic.size()) != kMagic) {
    throw InputError("checkpoint: bad magic, not a checkpoint file");
  }
  const auto version = get_le(bytes, 8, 4);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto header_len = get_le(bytes, 12, 8);
  if (header_len > bytes.size() - kPreamble) throw InputError("checkpoint: truncated header");

  Checkpoint ckpt;
  std::size_t data_start = kPreamble + header_len;
  try {
    const json header = json::parse(bytes.substr(kPreamble, header_len));
    ckpt.library_version = header.at("library_version").get<std::string>();
    ckpt.config = train_config_from_json(header.at("config").dump());
    ckpt.dataset_fingerprint = header.at("dataset_fingerprint").get<std::uint64_t>();
    ckpt.best_epoch = header.at("best_epoch").get<std::size_t>();
    const json& s = header.at("shapes");
    ModelShapes shapes;
    shapes.num_features = s.at("num_features").get<std::size_t>();
    shapes.emb_dim = s.at("emb_dim").get<std::size_t>();
    shapes.hidden_dim = s.at("hidden_dim").get<std::size_t>();
    shapes.num_classes = s.at("num_classes").get<std::size_t>();
    shapes.projection_hidden = s.at("projection_hidden").get<bool>();
    // Reject shapes the data block cannot hold before allocating anything.
    const std::size_t available = (bytes.size() - data_start) / sizeof(double);
    const auto fits = [&](std::size_t rows, std::size_t cols) { return cols == 0 || rows <= available / cols; };
    if (!fits(shapes.num_features, shapes.emb_dim) || !fits(shapes.emb_dim, shapes.hidden_dim) ||
        !fits(shapes.hidden_dim, shapes.num_classes) || !fits(shapes.hidden_dim, shapes.hidden_dim)) {
      throw InputError("checkpoint: declared shapes exceed the tensor data");
    }
    ckpt.params = xavier_init(shapes, 0);  // allocates every tensor with the right shape
    ckpt.params.dropout = header.at("dropout").get<double>();

    const json& tensors = header.at("tensors");
    auto slots = ckpt.params.tensors();
    if (tensors.size() != slots.size()) throw InputError("checkpoint: tensor count does not match the shapes");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const json& t = tensors[i];
      DenseMatrix& m = *slots[i].second;
      if (t.at("name").get<std::string>() != slots[i].first || t.at("rows").get<std::size_t>() != m.rows() ||
          t.at("cols").get<std::size_t>() != m.cols()) {
        throw InputError("checkpoint: tensor " + std::to_string(i) + " does not match the declared shapes");
      }
      const std::size_t at = data_start + t.at("offset").get<std::size_t>();
      if (at > bytes.size() || (bytes.size() - at) / sizeof(double) < m.size()) {
        throw InputError("checkpoint: truncated tensor data for '" + std::string(slots[i].first) + "'");
      }
      auto vals = m.values();
      for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = std::bit_cast<double>(get_le(bytes, at + 8 * k, 8));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ContractError& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace catgcn
