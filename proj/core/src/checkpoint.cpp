#include "muse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "binary_io.hpp"

namespace muse {

using nlohmann::json;

namespace {

json shape_json(const ModelShape& s) {
  return {{"num_relations", s.num_relations},
          {"hidden", s.hidden},
          {"prior_dim", s.prior_dim},
          {"path_rows", s.path_rows},
          {"k_iters", s.k_iters}};
}

constexpr std::uint32_t kMaxHeader = 1u << 24;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta) {
  json header;
  header["config"] = json::parse(to_json(model.config()));
  header["dataset"] = meta.dataset;
  header["embeddings"] = meta.embeddings;
  header["shape"] = shape_json(model.params().shape());
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u32(out, static_cast<std::uint32_t>(text.size()));
  detail::write_bytes(out, text);

  auto params = model.params();
  for (auto& t : params.tensors()) {
    detail::write_u32(out, static_cast<std::uint32_t>(t.name.size()));
    detail::write_bytes(out, t.name);
    detail::write_u32(out, static_cast<std::uint32_t>(t.rank));
    detail::write_u32(out, static_cast<std::uint32_t>(t.values.rows()));
    if (t.rank == 2) detail::write_u32(out, static_cast<std::uint32_t>(t.values.cols()));
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.values.cols(); ++j) {
        detail::write_f32(out, static_cast<float>(t.values(i, j)));
      }
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  detail::Reader r(in, path.string());

  char magic[sizeof kCheckpointMagic];
  r.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ParseError(path.string() + ": bad magic (expected MUSECKPT1)");
  }
  const auto header_len = r.u32("header length");
  if (header_len > kMaxHeader) throw ParseError(path.string() + ": header too large");

  Checkpoint ck;
  ck.header_json = r.bytes(header_len, "header");
  try {
    const json header = json::parse(ck.header_json);
    ck.config = config_from_json(header.at("config").dump());
    ck.meta.dataset = header.at("dataset").get<std::string>();
    ck.meta.embeddings = header.at("embeddings").get<std::string>();
    const auto& s = header.at("shape");
    ck.shape.num_relations = s.at("num_relations").get<std::size_t>();
    ck.shape.hidden = s.at("hidden").get<std::size_t>();
    ck.shape.prior_dim = s.at("prior_dim").get<std::size_t>();
    ck.shape.path_rows = s.at("path_rows").get<std::size_t>();
    ck.shape.k_iters = s.at("k_iters").get<std::size_t>();
  } catch (const std::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what());
  }

  ck.params = ModelParams::zeros(ck.shape);
  std::map<std::string, TensorRef*> by_name;
  auto tensors = ck.params.tensors();
  for (auto& t : tensors) by_name.emplace(t.name, &t);
  std::map<std::string, bool> loaded;

  while (!r.at_eof()) {
    const auto name_len = r.u32("tensor name length");
    if (name_len > 4096) throw ParseError(path.string() + ": tensor name too long");
    const auto name = r.bytes(name_len, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError(path.string() + ": unexpected tensor '" + name + "'");
    auto& t = *it->second;
    const auto rank = r.u32("rank");
    if (rank != t.rank) throw ParseError(path.string() + ": tensor '" + name + "' has wrong rank");
    const auto rows = r.u32("dims");
    const std::uint32_t cols = rank == 2 ? r.u32("dims") : 1;
    if (rows != t.values.rows() || cols != t.values.cols()) {
      throw ParseError(path.string() + ": tensor '" + name + "' shape does not match header");
    }
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.values.cols(); ++j) t.values(i, j) = r.f32("tensor data");
    }
    loaded[name] = true;
  }
  for (const auto& t : tensors) {
    if (!loaded.count(t.name)) throw ParseError(path.string() + ": missing tensor '" + t.name + "'");
  }
  return ck;
}

}  // namespace muse
