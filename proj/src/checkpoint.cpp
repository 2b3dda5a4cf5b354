#include "dsft/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "dsft/error.hpp"
#include "dsft/hash.hpp"

namespace dsft {

namespace {

std::filesystem::path stem_of(const std::filesystem::path& p) {
  if (p.extension() == ".json" || p.extension() == ".bin") return p.parent_path() / p.stem();
  return p;
}

void append_le(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  for (float f : values) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
}

void read_le(std::string_view blob, std::size_t byte_offset, std::span<float> out) {
  const auto* src = reinterpret_cast<const unsigned char*>(blob.data()) + byte_offset;
  for (auto& f : out) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(src[b]) << (8 * b);
    f = std::bit_cast<float>(bits);
    src += 4;
  }
}

}  // namespace

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path) {
  auto s = stem_of(path);
  return s.replace_extension(".json");
}

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& path) {
  auto s = stem_of(path);
  return s.replace_extension(".bin");
}

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt) {
  std::string blob;
  blob.reserve((ckpt.params.data.size() * (ckpt.adam ? 3 : 1)) * 4);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  const auto add = [&](const std::string& name, const std::vector<int>& shape, std::span<const float> values) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["shape"] = shape;
    t["offset"] = blob.size();
    t["bytes"] = values.size() * 4;
    tensors.push_back(t);
    append_le(blob, values);
  };
  for (const auto& t : ckpt.params.layout.tensors) {
    add(t.name, t.shape, std::span<const float>(ckpt.params.data).subspan(t.offset, t.size));
  }
  if (ckpt.adam) {
    const int n = static_cast<int>(ckpt.params.data.size());
    add("adam.m", {n}, ckpt.adam->m);
    add("adam.v", {n}, ckpt.adam->v);
  }

  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["config"] = to_json(ckpt.params.config);
  j["step"] = ckpt.step;
  j["rng"] = {{"seed", ckpt.seed}, {"step", ckpt.step}};
  j["vocab_hash"] = ckpt.vocab_hash;
  if (ckpt.adam) j["optimizer"] = {{"kind", "adam"}, {"t", ckpt.adam->t}};
  j["train_config"] = ckpt.train_config;
  j["blob"] = checkpoint_blob_path(stem).filename().string();
  j["blob_sha256"] = sha256_hex(blob);
  j["tensors"] = tensors;

  write_file(checkpoint_blob_path(stem), blob);
  write_file(checkpoint_manifest_path(stem), j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto manifest_path = checkpoint_manifest_path(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw input_error("checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) throw input_error("not a " + std::string(kCheckpointFormat) + " manifest");
  const std::string blob = read_file(manifest_path.parent_path() / j.at("blob").get<std::string>());
  if (sha256_hex(blob) != j.at("blob_sha256").get<std::string>()) {
    throw integrity_error("checkpoint blob hash mismatch for " + manifest_path.string());
  }

  Checkpoint ck;
  ck.params = Params<float>(model_config_from_json(j.at("config")));
  ck.step = j.at("step").get<long>();
  ck.seed = j.at("rng").at("seed").get<std::uint64_t>();
  ck.vocab_hash = j.value("vocab_hash", "");
  ck.train_config = j.value("train_config", nlohmann::ordered_json::object());

  const auto find = [&](const std::string& name) -> const nlohmann::json* {
    for (const auto& t : j.at("tensors")) {
      if (t.at("name") == name) return &t;
    }
    return nullptr;
  };
  const auto load_into = [&](const nlohmann::json& t, std::span<float> out) {
    const auto offset = t.at("offset").get<std::size_t>();
    const auto bytes = t.at("bytes").get<std::size_t>();
    if (bytes != out.size() * 4 || offset + bytes > blob.size()) {
      throw integrity_error("checkpoint tensor '" + t.at("name").get<std::string>() + "' has inconsistent size");
    }
    read_le(blob, offset, out);
  };
  for (const auto& spec : ck.params.layout.tensors) {
    const auto* t = find(spec.name);
    if (!t) throw integrity_error("checkpoint is missing tensor '" + spec.name + "'");
    load_into(*t, std::span<float>(ck.params.data).subspan(spec.offset, spec.size));
  }
  if (j.contains("optimizer")) {
    AdamState st(ck.params.data.size());
    st.t = j.at("optimizer").at("t").get<long>();
    const auto* m = find("adam.m");
    const auto* v = find("adam.v");
    if (!m || !v) throw integrity_error("checkpoint optimizer state is incomplete");
    load_into(*m, st.m);
    load_into(*v, st.v);
    ck.adam = std::move(st);
  }
  return ck;
}

}  // namespace dsft
