#include "geod/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace geod {

using nlohmann::json;

Tensor ParameterStore::create(const std::string& name, Tensor init) {
  GEOD_CHECK(!name.empty(), "parameter name must be non-empty");
  GEOD_CHECK(params_.find(name) == params_.end(), "duplicate parameter name '" << name << "'");
  init.set_requires_grad(true);
  params_.emplace(name, init);
  return init;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  GEOD_CHECK(it != params_.end(), "unknown parameter '" << name << "'");
  return it->second;
}

bool ParameterStore::has(const std::string& name) const { return params_.count(name) > 0; }

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : params_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  }
  return out;
}

void ParameterStore::set_values(const std::string& name, const std::vector<double>& values) {
  auto it = params_.find(name);
  GEOD_CHECK(it != params_.end(), "unknown parameter '" << name << "'");
  GEOD_CHECK(it->second.numel() == static_cast<int64_t>(values.size()),
             "parameter '" << name << "': size mismatch " << values.size() << " vs " << it->second.numel());
  it->second.mutable_values() = values;
}

void Adam::step(ParameterStore& params, const GradMap& grads,
                const std::vector<std::string>& prefixes) {
  auto matches = [&](const std::string& name) {
    if (prefixes.empty()) return true;
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) return true;
    }
    return false;
  };
  for (const auto& [name, param] : params.all()) {
    if (!matches(name)) continue;
    Tensor g = grads.get(param);
    State& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(param.numel(), 0.0);
      st.v.assign(param.numel(), 0.0);
    }
    ++st.t;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
    const std::vector<double>& gv = g.values();
    std::vector<double>& pv = const_cast<Tensor&>(param).mutable_values();
    for (size_t i = 0; i < pv.size(); ++i) {
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gv[i];
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gv[i] * gv[i];
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      pv[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[] = "GEOD1\n";
constexpr size_t kMagicLen = 6;
}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& params,
                     const std::string& meta_json) {
  json header = json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : params.all()) {
    header.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float32"}, {"byte_offset", offset}});
    offset += t.numel() * static_cast<int64_t>(sizeof(float));
  }
  std::vector<uint8_t> meta_bytes(meta_json.begin(), meta_json.end());
  header.push_back({{"name", "__meta__"},
                    {"shape", json::array({meta_bytes.size()})},
                    {"dtype", "uint8"},
                    {"byte_offset", offset}});

  // Write to a temp file and rename so a crash can't leave a torn checkpoint.
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    GEOD_CHECK(out.good(), "cannot open '" << tmp << "' for writing");
    out.write(kMagic, kMagicLen);
    std::string hdr = header.dump();
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    out.put('\n');
    for (const auto& [name, t] : params.all()) {
      std::vector<float> buf(t.values().begin(), t.values().end());
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    out.write(reinterpret_cast<const char*>(meta_bytes.data()),
              static_cast<std::streamsize>(meta_bytes.size()));
    GEOD_CHECK(out.good(), "write failure on '" << tmp << "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  GEOD_CHECK(!ec, "rename '" << tmp << "' -> '" << path << "' failed: " << ec.message());
}

std::string load_checkpoint(const std::string& path, ParameterStore& params) {
  std::ifstream in(path, std::ios::binary);
  GEOD_CHECK(in.good(), "cannot open checkpoint '" << path << "'");
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  GEOD_CHECK(in.gcount() == static_cast<std::streamsize>(kMagicLen) &&
                 std::memcmp(magic, kMagic, kMagicLen) == 0,
             "'" << path << "' is not a checkpoint (bad magic)");
  std::string hdr_line;
  GEOD_CHECK(static_cast<bool>(std::getline(in, hdr_line)), "checkpoint '" << path << "': missing header");
  json header;
  try {
    header = json::parse(hdr_line);
  } catch (const json::exception& e) {
    throw Error("checkpoint '" + path + "': corrupt header: " + e.what());
  }
  GEOD_CHECK(header.is_array(), "checkpoint '" << path << "': header must be a list");
  std::streampos payload_start = in.tellg();
  std::string meta;
  for (const auto& entry : header) {
    GEOD_CHECK(entry.contains("name") && entry.contains("shape") && entry.contains("dtype") &&
                   entry.contains("byte_offset"),
               "checkpoint '" << path << "': malformed header entry");
    std::string name = entry["name"];
    Shape shape = entry["shape"].get<Shape>();
    std::string dtype = entry["dtype"];
    int64_t offset = entry["byte_offset"];
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    int64_t n = shape_numel(shape);
    if (dtype == "uint8") {
      std::vector<char> bytes(n);
      in.read(bytes.data(), n);
      GEOD_CHECK(in.gcount() == n, "checkpoint '" << path << "': truncated entry '" << name << "'");
      if (name == "__meta__") meta.assign(bytes.begin(), bytes.end());
      continue;
    }
    GEOD_CHECK(dtype == "float32", "checkpoint '" << path << "': unsupported dtype '" << dtype << "'");
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), n * static_cast<int64_t>(sizeof(float)));
    GEOD_CHECK(in.gcount() == n * static_cast<int64_t>(sizeof(float)),
               "checkpoint '" << path << "': truncated entry '" << name << "'");
    std::vector<double> vals(buf.begin(), buf.end());
    for (double v : vals) GEOD_CHECK(std::isfinite(v), "checkpoint '" << path << "': non-finite value in '" << name << "'");
    if (params.has(name)) {
      params.set_values(name, vals);
    } else {
      params.create(name, Tensor::from_data(shape, std::move(vals)));
    }
  }
  return meta;
}

}  // namespace geod
