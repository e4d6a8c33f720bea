#include "ztok/model/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ztok/io/files.hpp"

namespace ztok::model {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'Z', 'T', 'O', 'K', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

json adapter_to_json(const AdapterConfig& a) {
  return json{{"enabled", a.enabled},
              {"rank", a.rank},
              {"alpha", a.alpha},
              {"dropout", a.dropout}};
}

json config_json(const TransformerConfig& cfg) {
  return json{{"n_layers", cfg.n_layers},
              {"n_heads", cfg.n_heads},
              {"model_dim", cfg.model_dim},
              {"ff_dim", cfg.ff_dim},
              {"max_seq_len", cfg.max_seq_len},
              {"base_size", cfg.base_size},
              {"z_size", cfg.z_size},
              {"tie_embeddings", cfg.tie_embeddings},
              {"adapters", adapter_to_json(cfg.adapters)}};
}

TransformerConfig config_from(const json& j) {
  TransformerConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.model_dim = j.at("model_dim").get<int>();
  cfg.ff_dim = j.at("ff_dim").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.base_size = j.at("base_size").get<int>();
  cfg.z_size = j.at("z_size").get<int>();
  cfg.tie_embeddings = j.at("tie_embeddings").get<bool>();
  const json& a = j.at("adapters");
  cfg.adapters.enabled = a.at("enabled").get<bool>();
  cfg.adapters.rank = a.at("rank").get<int>();
  cfg.adapters.alpha = a.at("alpha").get<double>();
  cfg.adapters.dropout = a.at("dropout").get<double>();
  cfg.validate();
  return cfg;
}

}  // namespace

std::string config_to_json(const TransformerConfig& cfg) { return config_json(cfg).dump(); }

TransformerConfig config_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  ZTOK_CHECK(!j.is_discarded(), input, "config: invalid JSON");
  return config_from(j);
}

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const CheckpointMeta& meta) {
  json header;
  header["config"] = config_json(params.cfg);
  header["role"] = role_name(params.role);
  header["step"] = meta.step;
  header["vocab_hash"] = meta.vocab_hash;
  header["dtype"] = "f32";
  json table = json::array();
  size_t total_bytes = 0;
  params.visit([&](const std::string& name, const Array<float>& a, ParamKind) {
    table.push_back(json{{"name", name}, {"rows", a.rows()}, {"cols", a.cols()}});
    total_bytes += a.values().size() * sizeof(float);
  });
  header["params"] = std::move(table);
  std::string hdr = header.dump();

  std::string blob;
  blob.reserve(sizeof(kMagic) + 12 + hdr.size() + total_bytes);
  blob.append(kMagic, sizeof(kMagic));
  uint32_t ver = kVersion;
  uint64_t hlen = hdr.size();
  blob.append(reinterpret_cast<const char*>(&ver), sizeof(ver));
  blob.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  blob.append(hdr);
  params.visit([&](const std::string&, const Array<float>& a, ParamKind) {
    blob.append(reinterpret_cast<const char*>(a.values().data()),
                a.values().size() * sizeof(float));
  });
  io::write_file_atomic(path, blob);
}

LoadedCheckpoint load_checkpoint(const std::string& path, uint64_t expected_vocab_hash) {
  std::string blob = io::read_file(path);
  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    ZTOK_CHECK(off + n <= blob.size(), input,
               std::string("checkpoint truncated while reading ") + what + ": " + path);
  };
  need(sizeof(kMagic), "magic");
  ZTOK_CHECK(std::memcmp(blob.data(), kMagic, sizeof(kMagic)) == 0, input,
             "not a checkpoint file: " + path);
  off += sizeof(kMagic);
  uint32_t ver = 0;
  uint64_t hlen = 0;
  need(sizeof(ver), "version");
  std::memcpy(&ver, blob.data() + off, sizeof(ver));
  off += sizeof(ver);
  ZTOK_CHECK(ver == kVersion, input, "unsupported checkpoint version: " + path);
  need(sizeof(hlen), "header length");
  std::memcpy(&hlen, blob.data() + off, sizeof(hlen));
  off += sizeof(hlen);
  need(hlen, "header");
  json header = json::parse(blob.substr(off, hlen), nullptr, false);
  ZTOK_CHECK(!header.is_discarded(), input, "checkpoint header is not valid JSON: " + path);
  off += hlen;

  LoadedCheckpoint out;
  out.params.cfg = config_from(header.at("config"));
  out.params.role = role_from_name(header.at("role").get<std::string>());
  out.meta.role = out.params.role;
  out.meta.step = header.at("step").get<long>();
  out.meta.vocab_hash = header.at("vocab_hash").get<uint64_t>();
  ZTOK_CHECK(header.at("dtype").get<std::string>() == "f32", input,
             "unsupported checkpoint dtype: " + path);
  if (expected_vocab_hash != 0)
    ZTOK_CHECK(out.meta.vocab_hash == expected_vocab_hash, input,
               "checkpoint was built against a different vocabulary: " + path);

  // Allocate the parameter tree from the config, then fill buffers in order.
  out.params = [&] {
    ModelParams<float> p = init_params<float>(out.params.cfg, out.params.role, 0);
    return p;
  }();
  out.params.role = out.meta.role;
  const json& table = header.at("params");
  size_t idx = 0;
  out.params.visit([&](const std::string& name, Array<float>& a, ParamKind) {
    ZTOK_CHECK(idx < table.size(), input, "checkpoint parameter table too short: " + path);
    const json& e = table[idx++];
    ZTOK_CHECK(e.at("name").get<std::string>() == name &&
                   e.at("rows").get<int>() == a.rows() && e.at("cols").get<int>() == a.cols(),
               input, "checkpoint parameter mismatch at " + name + ": " + path);
    size_t bytes = a.values().size() * sizeof(float);
    need(bytes, name.c_str());
    std::memcpy(a.values().data(), blob.data() + off, bytes);
    off += bytes;
  });
  ZTOK_CHECK(idx == table.size(), input, "checkpoint parameter table too long: " + path);
  ZTOK_CHECK(off == blob.size(), input, "checkpoint has trailing bytes: " + path);
  return out;
}

}  // namespace ztok::model
