#include "sharekd/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sharekd {
namespace {

constexpr const char* kMagic = "sharekd-checkpoint v1";

std::string config_line(const EncoderConfig& c) {
  std::ostringstream os;
  os << "config vocab_size=" << c.vocab_size << " max_seq_len=" << c.max_seq_len
     << " hidden_dim=" << c.hidden_dim << " num_heads=" << c.num_heads << " ff_dim=" << c.ff_dim
     << " num_physical_layers=" << c.num_physical_layers << " num_classes=" << c.num_classes;
  return os.str();
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + what);
}

std::size_t to_size(const std::filesystem::path& path, std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(path, "bad integer '" + std::string(s) + "'");
  return v;
}

EncoderConfig parse_config(const std::filesystem::path& path, const std::string& line) {
  std::istringstream is(line);
  std::string word;
  is >> word;
  if (word != "config") fail(path, "expected config line");
  std::map<std::string, std::size_t> kv;
  while (is >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) fail(path, "bad config field '" + word + "'");
    kv[word.substr(0, eq)] = to_size(path, std::string_view(word).substr(eq + 1));
  }
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) fail(path, std::string("config lacks ") + key);
    return it->second;
  };
  EncoderConfig c;
  c.vocab_size = get("vocab_size");
  c.max_seq_len = get("max_seq_len");
  c.hidden_dim = get("hidden_dim");
  c.num_heads = get("num_heads");
  c.ff_dim = get("ff_dim");
  c.num_physical_layers = get("num_physical_layers");
  c.num_classes = get("num_classes");
  return c;
}

std::string shape_token(const nk::Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out;
}

// Expected layout of a store with the given geometry, in manifest order.
ParamStore empty_store(const EncoderConfig& c, std::size_t sets) {
  ParamStore s;
  const std::size_t d = c.hidden_dim, ff = c.ff_dim;
  s.token_embedding = nk::Tensor::zeros({c.vocab_size, d});
  s.position_embedding = nk::Tensor::zeros({c.max_seq_len, d});
  for (std::size_t i = 0; i < sets; ++i) {
    LayerParams p;
    p.wq = nk::Tensor::zeros({d, d});
    p.bq = nk::Tensor::zeros({d});
    p.wk = nk::Tensor::zeros({d, d});
    p.bk = nk::Tensor::zeros({d});
    p.wv = nk::Tensor::zeros({d, d});
    p.bv = nk::Tensor::zeros({d});
    p.wo = nk::Tensor::zeros({d, d});
    p.bo = nk::Tensor::zeros({d});
    p.w_ff1 = nk::Tensor::zeros({d, ff});
    p.b_ff1 = nk::Tensor::zeros({ff});
    p.w_ff2 = nk::Tensor::zeros({ff, d});
    p.b_ff2 = nk::Tensor::zeros({d});
    p.ln1_gamma = nk::Tensor::zeros({d});
    p.ln1_beta = nk::Tensor::zeros({d});
    p.ln2_gamma = nk::Tensor::zeros({d});
    p.ln2_beta = nk::Tensor::zeros({d});
    s.layer_sets.push_back(std::move(p));
  }
  s.head_w = nk::Tensor::zeros({d, c.num_classes});
  s.head_b = nk::Tensor::zeros({c.num_classes});
  return s;
}

struct ParsedHeader {
  CheckpointManifest manifest;
  std::streamoff data_start = 0;
};

ParsedHeader parse_header(const std::filesystem::path& path, std::istream& in) {
  ParsedHeader h;
  std::string line;
  if (!std::getline(in, line) || line != kMagic) fail(path, "missing header '" + std::string(kMagic) + "'");
  if (!std::getline(in, line)) fail(path, "truncated manifest");
  h.manifest.config = parse_config(path, line);
  if (!std::getline(in, line) || line.rfind("plan ", 0) != 0) fail(path, "expected plan line");
  try {
    h.manifest.plan = SharingPlan::parse(std::string_view(line).substr(5));
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  if (!std::getline(in, line) || line.rfind("tensors ", 0) != 0) fail(path, "expected tensors line");
  const std::size_t count = to_size(path, std::string_view(line).substr(8));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) fail(path, "truncated tensor list");
    std::istringstream is(line);
    ManifestEntry e;
    std::string shape, offset, checksum;
    if (!(is >> e.name >> shape >> offset >> checksum)) fail(path, "bad tensor line '" + line + "'");
    std::string_view rest = shape;
    while (!rest.empty()) {
      const auto x = rest.find('x');
      e.shape.push_back(to_size(path, rest.substr(0, x)));
      rest = x == std::string_view::npos ? std::string_view{} : rest.substr(x + 1);
    }
    e.offset = to_size(path, offset);
    auto [ptr, ec] = std::from_chars(checksum.data(), checksum.data() + checksum.size(), e.checksum, 16);
    if (ec != std::errc()) fail(path, "bad checksum '" + checksum + "'");
    h.manifest.entries.push_back(std::move(e));
  }
  if (!std::getline(in, line) || line != "end") fail(path, "manifest not terminated by 'end'");
  h.data_start = in.tellg();
  return h;
}

}  // namespace

std::uint64_t tensor_checksum(const nk::Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : t.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  model.validate();
  const auto tensors = model.store.named_tensors();
  std::ostringstream header;
  header << kMagic << "\n" << config_line(model.config) << "\n";
  header << "plan " << model.plan.serialize() << "\n";
  header << "tensors " << tensors.size() << "\n";
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    char hex[17];
    auto [end, ec] = std::to_chars(hex, hex + 16, tensor_checksum(nt.tensor), 16);
    *end = '\0';
    header << nt.name << " " << shape_token(nt.tensor.shape()) << " " << offset << " " << hex << "\n";
    offset += nt.tensor.size() * sizeof(double);
  }
  header << "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& nt : tensors) {
    for (double v : nt.tensor.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(bytes, 8);
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

CheckpointManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return parse_header(path, in).manifest;
}

Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<EncoderConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  ParsedHeader h = parse_header(path, in);
  const CheckpointManifest& m = h.manifest;
  if (expected && !(*expected == m.config)) {
    fail(path, "config mismatch: file has '" + config_line(m.config) + "', expected '" +
                   config_line(*expected) + "'");
  }
  try {
    m.config.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }

  Model model{m.config, empty_store(m.config, m.plan.num_param_sets()), m.plan};
  auto tensors = model.store.named_tensors();
  if (tensors.size() != m.entries.size()) {
    fail(path, "expected " + std::to_string(tensors.size()) + " tensors, manifest lists " +
                   std::to_string(m.entries.size()));
  }
  std::string buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const ManifestEntry& e = m.entries[i];
    nk::Tensor& t = tensors[i].tensor;
    if (e.name != tensors[i].name) fail(path, "expected tensor '" + tensors[i].name + "', found '" + e.name + "'");
    if (e.shape != t.shape()) {
      fail(path, "tensor " + e.name + " has shape " + nk::shape_str(e.shape) + ", config implies " +
                     nk::shape_str(t.shape()));
    }
    const std::uint64_t bytes = t.size() * sizeof(double);
    if (e.offset + bytes > buffer.size()) fail(path, "data for " + e.name + " is truncated");
    auto values = t.data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buffer[e.offset + j * 8 + b]))
                << (8 * b);
      }
      values[j] = std::bit_cast<double>(bits);
    }
    if (tensor_checksum(t) != e.checksum) fail(path, "checksum mismatch for " + e.name);
  }
  model.validate();
  return model;
}

}  // namespace sharekd
