// SPDX-License-Identifier: Apache-2.0
#include "ram/cli/checkpoint.hpp"

#include <string>

#include "ram/io.hpp"

namespace ram {

namespace {

constexpr std::string_view kMagic = "RAMC";

void put_tensor(ByteWriter& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.shape().size()));
  for (auto d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
  for (Real v : t.data()) w.f32(static_cast<float>(v));
}

Tensor get_tensor(ByteReader& r) {
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " exceeds 8");
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& d : shape) {
    const std::uint64_t v = r.u64();
    if (v > (std::uint64_t{1} << 32)) throw FormatError("tensor dimension too large");
    d = static_cast<std::int64_t>(v);
    numel *= v;
  }
  if (numel * 4 > r.remaining()) throw FormatError("tensor data truncated");
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<Real>(r.f32());
  return t;
}

void put_store(ByteWriter& w, const ParameterStore& params) {
  const auto all = params.all();
  w.u32(static_cast<std::uint32_t>(all.size()));
  for (const Parameter* p : all) {
    w.str(p->name);
    put_tensor(w, p->value);
  }
}

void get_store(ByteReader& r, ParameterStore& params) {
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw FormatError("tensor count " + std::to_string(count) + " does not match the configured model (" +
                      std::to_string(params.size()) + ")");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    Tensor t = get_tensor(r);
    const Parameter* known = params.find(name);
    if (!known) throw FormatError("unexpected tensor '" + name + "'");
    if (known->value.shape() != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(t.shape()) + ", model expects " +
                        shape_str(known->value.shape()));
    }
    params.get(name).value = std::move(t);
  }
}

std::vector<std::uint8_t> encode(const RunConfig& config, const ParameterStore& params, const Adam* opt,
                                 std::int64_t step, std::uint64_t evaluator_hash) {
  ByteWriter w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.str(to_json(config).dump());
  put_store(w, params);
  w.u64(opt ? static_cast<std::uint64_t>(opt->steps()) : 0);
  w.u32(opt ? static_cast<std::uint32_t>(opt->moments().size()) : 0);
  if (opt) {
    for (const auto& [name, mv] : opt->moments()) {
      w.str(name);
      put_tensor(w, mv.m);
      put_tensor(w, mv.v);
    }
  }
  w.u64(static_cast<std::uint64_t>(step));
  w.u64(evaluator_hash);
  return w.take();
}


RunConfig read_header(ByteReader& r) {
  r.expect_magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (supported: " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto j = nlohmann::json::parse(r.str(), nullptr, false);
  if (j.is_discarded()) throw FormatError("embedded configuration is not valid JSON");
  return from_json(j);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const RunConfig& config, const ParameterStore& params, const Adam& opt,
                                            std::int64_t step, std::uint64_t evaluator_hash) {
  return encode(config, params, &opt, step, evaluator_hash);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  Checkpoint c;
  c.config = read_header(r);
  c.model = std::make_unique<ModelBundle>(c.config.model);
  get_store(r, c.model->params());
  const auto opt_steps = static_cast<std::int64_t>(r.u64());
  const std::uint32_t n_moments = r.u32();
  std::map<std::string, Adam::Moments> moments;
  for (std::uint32_t i = 0; i < n_moments; ++i) {
    std::string name = r.str();
    Adam::Moments mv;
    mv.m = get_tensor(r);
    mv.v = get_tensor(r);
    const Parameter* p = c.model->params().find(name);
    if (!p || p->value.shape() != mv.m.shape() || p->value.shape() != mv.v.shape()) {
      throw FormatError("optimizer state for '" + name + "' does not match the model");
    }
    moments.emplace(std::move(name), std::move(mv));
  }
  c.optimizer = Adam(c.config.adam());
  c.optimizer.restore(opt_steps, std::move(moments));
  c.step = static_cast<std::int64_t>(r.u64());
  c.evaluator_hash = r.u64();
  r.expect_end();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ModelBundle& model,
                     const Adam& opt, std::int64_t step, std::uint64_t evaluator_hash) {
  write_file_atomic(path, encode_checkpoint(config, model.params(), opt, step, evaluator_hash));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes, path.string());
}

void save_evaluator(const std::filesystem::path& path, const RunConfig& config, const Evaluator& ev) {
  write_file_atomic(path, encode(config, ev.params(), nullptr, 0, ev.frozen() ? ev.frozen_hash() : ev.hash()));
}

Evaluator load_evaluator(const std::filesystem::path& path, int frame_dims) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, path.string());
  const RunConfig config = read_header(r);
  Evaluator ev(config.evaluator, frame_dims);
  get_store(r, ev.params());
  (void)r.u64();
  if (r.u32() != 0) throw FormatError(path.string() + ": evaluator file carries optimizer state");
  (void)r.u64();
  const std::uint64_t stored = r.u64();
  r.expect_end();
  if (ev.hash() != stored) {
    throw EvaluatorChanged("evaluator weights hash " + hex64(ev.hash()) + " differs from recorded " + hex64(stored));
  }
  ev.freeze();
  return ev;
}

}  // namespace ram
