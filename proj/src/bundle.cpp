#include "geomrel/bundle.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "geomrel/error.hpp"
#include "geomrel/rng.hpp"

namespace geomrel {

namespace fs = std::filesystem;

LayerView EmbeddingBundle::layer(std::size_t l) const {
  if (l >= n_layers)
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("layer {} out of range for {}-layer bundle", l, n_layers));
  const auto stride = static_cast<Eigen::Index>(n_layers * dim);
  return LayerView(data.data() + l * dim, static_cast<Eigen::Index>(n_prompts()),
                   static_cast<Eigen::Index>(dim), Eigen::OuterStride<>(stride));
}

void EmbeddingBundle::check() const {
  if (n_layers == 0 || dim == 0)
    throw Error(ErrorKind::Shape, fmt::format("bundle '{}': n_layers and dim must be positive", model_id));
  if (data.size() != n_prompts() * n_layers * dim)
    throw Error(ErrorKind::Shape,
                fmt::format("bundle '{}': {} floats for shape ({}, {}, {})", model_id, data.size(),
                            n_prompts(), n_layers, dim));
  std::set<std::string_view> seen;
  for (const auto& id : prompt_ids)
    if (!seen.insert(id).second)
      throw Error(ErrorKind::Validation, fmt::format("bundle '{}': duplicate prompt id '{}'", model_id, id));
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i])) {
      const auto row = i / (n_layers * dim);
      throw Error(ErrorKind::NonFinite,
                  fmt::format("bundle '{}': non-finite value for prompt '{}' at layer {}", model_id,
                              prompt_ids[row], (i / dim) % n_layers));
    }
}

BundlePaths bundle_paths(const fs::path& path) {
  fs::path base = path;
  if (base.extension() == ".manifest" || base.extension() == ".bin") base.replace_extension();
  return {fs::path(base.string() + ".manifest"), fs::path(base.string() + ".bin")};
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "sha256 digest failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

namespace {

std::vector<unsigned char> encode_payload(const std::vector<float>& values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return bytes;
}

std::vector<float> decode_payload(const std::vector<unsigned char>& bytes) {
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

std::size_t parse_size(const std::string& value, const std::string& key, const fs::path& source) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || value.empty())
    throw Error(ErrorKind::Parse, fmt::format("{}: bad integer for {}: '{}'", source.string(), key, value));
  return static_cast<std::size_t>(v);
}

}  // namespace

void write_bundle(const EmbeddingBundle& bundle, const fs::path& path) {
  bundle.check();
  const auto paths = bundle_paths(path);
  const auto bytes = encode_payload(bundle.data);

  std::ofstream payload(paths.payload, std::ios::binary | std::ios::trunc);
  if (!payload) throw Error(ErrorKind::Io, fmt::format("cannot write {}", paths.payload.string()));
  payload.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!payload) throw Error(ErrorKind::Io, fmt::format("short write to {}", paths.payload.string()));

  std::ofstream manifest(paths.manifest, std::ios::trunc);
  if (!manifest) throw Error(ErrorKind::Io, fmt::format("cannot write {}", paths.manifest.string()));
  manifest << "model_id=" << bundle.model_id << '\n'
           << "n_prompts=" << bundle.n_prompts() << '\n'
           << "n_layers=" << bundle.n_layers << '\n'
           << "dim=" << bundle.dim << '\n'
           << "sha256=" << sha256_hex(bytes.data(), bytes.size()) << '\n';
  for (const auto& id : bundle.prompt_ids) manifest << id << '\n';
  if (!manifest) throw Error(ErrorKind::Io, fmt::format("short write to {}", paths.manifest.string()));
}

EmbeddingBundle read_bundle(const fs::path& path) {
  const auto paths = bundle_paths(path);
  std::ifstream manifest(paths.manifest);
  if (!manifest) throw Error(ErrorKind::Io, fmt::format("cannot open {}", paths.manifest.string()));

  std::map<std::string, std::string> keys;
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (keys.size() < 5) {
      if (eq == std::string::npos)
        throw Error(ErrorKind::Parse, fmt::format("{}: expected key=value, got '{}'", paths.manifest.string(), line));
      keys[line.substr(0, eq)] = line.substr(eq + 1);
    } else {
      ids.push_back(line);
    }
  }
  for (const char* key : {"model_id", "n_prompts", "n_layers", "dim", "sha256"})
    if (!keys.contains(key))
      throw Error(ErrorKind::Parse, fmt::format("{}: missing key '{}'", paths.manifest.string(), key));

  EmbeddingBundle b;
  b.model_id = keys["model_id"];
  const auto n_prompts = parse_size(keys["n_prompts"], "n_prompts", paths.manifest);
  b.n_layers = parse_size(keys["n_layers"], "n_layers", paths.manifest);
  b.dim = parse_size(keys["dim"], "dim", paths.manifest);
  if (ids.size() != n_prompts)
    throw Error(ErrorKind::Shape, fmt::format("{}: n_prompts={} but {} prompt ids listed",
                                              paths.manifest.string(), n_prompts, ids.size()));
  b.prompt_ids = std::move(ids);

  std::ifstream payload(paths.payload, std::ios::binary);
  if (!payload) throw Error(ErrorKind::Io, fmt::format("cannot open {}", paths.payload.string()));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(payload)), std::istreambuf_iterator<char>());

  const std::size_t expected = n_prompts * b.n_layers * b.dim;
  if (bytes.size() != expected * 4)
    throw Error(ErrorKind::Shape,
                fmt::format("{}: payload holds {} bytes, manifest shape ({}, {}, {}) needs {}",
                            paths.payload.string(), bytes.size(), n_prompts, b.n_layers, b.dim, expected * 4));
  if (sha256_hex(bytes.data(), bytes.size()) != keys["sha256"])
    throw Error(ErrorKind::Checksum, fmt::format("{}: sha256 mismatch", paths.payload.string()));

  b.data = decode_payload(bytes);
  b.check();
  return b;
}

SynthBundle synth_bundle(std::uint64_t seed, std::size_t n_pairs, std::size_t n_layers, std::size_t dim,
                         double shift, const std::string& model_id) {
  if (n_pairs == 0 || n_layers == 0 || dim == 0)
    throw Error(ErrorKind::InvalidArgument, "synth_bundle: sizes must be positive");

  Eigen::VectorXd direction(static_cast<Eigen::Index>(dim));
  CounterStream dir_stream(seed, 0);
  do {
    for (auto& x : direction) x = dir_stream.next_normal();
  } while (direction.norm() == 0.0);
  direction.normalize();

  SynthBundle out;
  auto& b = out.bundle;
  b.model_id = model_id;
  b.n_layers = n_layers;
  b.dim = dim;
  b.data.resize(2 * n_pairs * n_layers * dim);
  const int width = n_pairs < 100 ? 2 : static_cast<int>(std::to_string(n_pairs).size());
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const auto pair_id = fmt::format("m{:0{}}", p + 1, width);
    b.prompt_ids.push_back(pair_id + "a");
    b.prompt_ids.push_back(pair_id + "u");
    out.labels.push_back(Label::Answerable);
    out.labels.push_back(Label::Unanswerable);
    for (std::size_t l = 0; l < n_layers; ++l) {
      CounterStream stream(seed, 1 + p * n_layers + l);
      float* a = b.data.data() + ((2 * p) * n_layers + l) * dim;
      float* u = b.data.data() + ((2 * p + 1) * n_layers + l) * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        const double x = stream.next_normal();
        a[j] = static_cast<float>(x);
        u[j] = static_cast<float>(x + shift * direction(static_cast<Eigen::Index>(j)));
      }
    }
  }
  return out;
}

bool GenerationLog::sc_eligible() const {
  if (temperature != 0.7) return false;
  for (const auto& [id, e] : entries)
    if (e.k != 5 || e.samples.size() != 5) return false;
  return true;
}

std::string escape_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\' || i + 1 == text.size()) {
      out += text[i];
      continue;
    }
    switch (text[++i]) {
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case '\\': out += '\\'; break;
      default:
        out += '\\';
        out += text[i];
    }
  }
  return out;
}

GenerationLog parse_generation_log(std::istream& in, std::string_view source) {
  GenerationLog log;
  std::map<std::string, std::map<std::size_t, std::string>> samples;
  std::set<std::string> greedy_seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const auto key = body.substr(0, eq);
      const auto value = body.substr(eq + 1);
      if (key == "model_id") log.model_id = value;
      if (key == "temperature") {
        try {
          log.temperature = std::stod(value);
        } catch (const std::exception&) {
          throw Error(ErrorKind::Parse, fmt::format("{}:{}: bad temperature '{}'", source, line_no, value));
        }
      }
      continue;
    }
    std::array<std::string, 3> head;
    std::size_t start = 0;
    for (auto& field : head) {
      const auto bar = line.find('|', start);
      if (bar == std::string::npos)
        throw Error(ErrorKind::Parse, fmt::format("{}:{}: expected prompt_id|kind|index|text", source, line_no));
      field = line.substr(start, bar - start);
      start = bar + 1;
    }
    auto text = unescape_text(std::string_view(line).substr(start));
    const auto& [id, kind, index] = head;
    std::size_t idx = 0;
    try {
      std::size_t pos = 0;
      idx = std::stoul(index, &pos);
      if (pos != index.size()) throw std::invalid_argument(index);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, fmt::format("{}:{}: bad index '{}'", source, line_no, index));
    }
    if (kind == "greedy") {
      if (!greedy_seen.insert(id).second)
        throw Error(ErrorKind::Parse, fmt::format("{}:{}: duplicate greedy output for '{}'", source, line_no, id));
      log.entries[id].greedy_output = std::move(text);
    } else if (kind == "sample") {
      if (!samples[id].emplace(idx, std::move(text)).second)
        throw Error(ErrorKind::Parse, fmt::format("{}:{}: duplicate sample {} for '{}'", source, line_no, idx, id));
      log.entries[id];
    } else {
      throw Error(ErrorKind::Parse, fmt::format("{}:{}: unknown kind '{}'", source, line_no, kind));
    }
  }
  for (auto& [id, entry] : log.entries) {
    entry.temperature = log.temperature;
    std::size_t expect = 0;
    for (auto& [idx, text] : samples[id]) {
      if (idx != expect++)
        throw Error(ErrorKind::Parse, fmt::format("{}: samples for '{}' are not indexed 0..k-1", source, id));
      entry.samples.push_back(std::move(text));
    }
    entry.k = entry.samples.size();
  }
  return log;
}

GenerationLog read_generation_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open generation log {}", path.string()));
  return parse_generation_log(in, path.string());
}

void write_generation_log(const GenerationLog& log, std::ostream& out) {
  out << "# model_id=" << log.model_id << '\n' << "# temperature=" << log.temperature << '\n';
  for (const auto& [id, e] : log.entries) {
    out << id << "|greedy|0|" << escape_text(e.greedy_output) << '\n';
    for (std::size_t i = 0; i < e.samples.size(); ++i)
      out << id << "|sample|" << i << '|' << escape_text(e.samples[i]) << '\n';
  }
}

}  // namespace geomrel
