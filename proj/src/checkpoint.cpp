#include "sgst/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sgst/errors.hpp"

namespace sgst {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'G', 'S', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

json config_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size},
          {"max_vertices", c.max_vertices},
          {"max_len", c.max_len},
          {"alpha", c.alpha.to_string()},
          {"literal_sqrt_d", c.literal_sqrt_d},
          {"self_loops", c.neighborhood.self_loops},
          {"symmetric", c.neighborhood.symmetric}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_vertices = j.at("max_vertices").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.alpha = AlphaConfig::parse(j.at("alpha").get<std::string>());
  c.literal_sqrt_d = j.at("literal_sqrt_d").get<bool>();
  c.neighborhood.self_loops = j.at("self_loops").get<bool>();
  c.neighborhood.symmetric = j.at("symmetric").get<bool>();
  return c;
}

}  // namespace

std::string model_config_json(const ModelConfig& config) { return config_to_json(config).dump(); }

std::string save_checkpoint(const ModelParams& params, const Vocabulary& vocab) {
  json directory = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params.named()) {
    directory.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->size() * sizeof(double);
  }
  json header = {{"config", config_to_json(params.config)},
                 {"vocab", vocab.tokens()},
                 {"tensors", std::move(directory)},
                 {"payload_bytes", offset}};
  const std::string header_text = header.dump();

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, header_text.size());
  out += header_text;
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : params.named()) {
    for (double v : t->values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint load_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16) throw FormatError("checkpoint truncated: missing preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic bytes");
  const auto version = static_cast<std::uint32_t>(get_uint(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_uint(bytes, 8, 8);
  if (header_len > bytes.size() - 16) throw FormatError("checkpoint truncated: header cut short");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::size_t payload_start = 16 + header_len;
  try {
    const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() - payload_start < payload_bytes) throw FormatError("checkpoint truncated: payload cut short");
    if (bytes.size() - payload_start > payload_bytes) throw FormatError("checkpoint has trailing bytes");

    Checkpoint ck{ModelParams::zeros(config_from_json(header.at("config"))),
                  Vocabulary(header.at("vocab").get<std::vector<std::string>>())};
    if (ck.vocab.size() != ck.params.config.vocab_size) throw FormatError("vocabulary size disagrees with config");
    const json& dir = header.at("tensors");
    auto named = ck.params.named();
    if (dir.size() != named.size()) throw FormatError("tensor directory does not match the model layout");
    for (std::size_t i = 0; i < named.size(); ++i) {
      const json& entry = dir[i];
      if (entry.at("name").get<std::string>() != named[i].name) {
        throw FormatError("unexpected tensor \"" + entry.at("name").get<std::string>() + "\", expected \"" +
                          named[i].name + "\"");
      }
      if (entry.at("shape").get<Shape>() != named[i].tensor->shape()) {
        throw FormatError("tensor \"" + named[i].name + "\" has the wrong shape");
      }
      const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
      const std::size_t n = named[i].tensor->size();
      if (off + n * sizeof(double) > payload_bytes) throw FormatError("tensor \"" + named[i].name + "\" overruns payload");
      for (std::size_t k = 0; k < n; ++k) {
        (*named[i].tensor)[k] = std::bit_cast<double>(get_uint(bytes, payload_start + off + k * 8, 8));
      }
    }
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is incomplete: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }
}

void write_checkpoint_file(const std::string& path, const ModelParams& params, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  const std::string bytes = save_checkpoint(params, vocab);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_checkpoint(ss.str());
}

}  // namespace sgst
