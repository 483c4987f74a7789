#include "chronocon/model_io.hpp"

#include <bit>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "chronocon/csv.hpp"

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace chronocon {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'C', 'M', 'O', 'D', 'E', 'L', '1'};

json mlp_meta(const Mlp& net) {
  const auto& spec = net.spec();
  return json{{"input_dim", spec.input_dim},
              {"hidden", spec.hidden},
              {"output_dim", spec.output_dim},
              {"activation", nonlinearity_name(spec.activation)}};
}

MlpSpec mlp_spec_from_meta(const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.activation = nonlinearity_from_name(j.at("activation").get<std::string>());
  return spec;
}

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_array(std::string& out, const std::string& name, const Eigen::VectorXd& values) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  put_u64(out, static_cast<std::uint64_t>(values.size()));
  out.append(reinterpret_cast<const char*>(values.data()),
             static_cast<size_t>(values.size()) * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path)
      : data_(data), path_(std::move(path)) {}

  void expect_magic() {
    if (data_.size() < sizeof(kMagic) || std::memcmp(data_.data(), kMagic, sizeof(kMagic)) != 0)
      throw std::runtime_error(path_ + ": not a chronocon model file (bad magic)");
    pos_ = sizeof(kMagic);
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Eigen::VectorXd doubles(size_t n) {
    need(n * sizeof(double));
    Eigen::VectorXd v(n);
    std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(size_t n) const {
    if (pos_ + n > data_.size()) throw std::runtime_error(path_ + ": truncated model file");
  }
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

void load_mlp_params(Mlp& net, const std::string& prefix,
                     const std::map<std::string, Eigen::VectorXd>& arrays,
                     const std::string& path) {
  for (const auto& view : net.param_views()) {
    auto it = arrays.find(prefix + "/" + view.name);
    if (it == arrays.end())
      throw std::runtime_error(path + ": missing array '" + prefix + "/" + view.name + "'");
    const auto n = static_cast<Eigen::Index>(view.rows) * view.cols;
    if (it->second.size() != n)
      throw std::runtime_error(path + ": array '" + prefix + "/" + view.name +
                               "' has wrong length");
    net.params().segment(view.offset, n) = it->second;
  }
}

void put_mlp_params(std::string& out, const std::string& prefix, const Mlp& net) {
  for (const auto& view : net.param_views()) {
    const auto n = static_cast<Eigen::Index>(view.rows) * view.cols;
    put_array(out, prefix + "/" + view.name, net.params().segment(view.offset, n));
  }
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& path) {
  json meta;
  meta["format_version"] = 1;
  meta["encoder"] = mlp_meta(bundle.encoder);
  meta["has_decoder"] = bundle.decoder.has_value();
  if (bundle.decoder) meta["decoder"] = mlp_meta(*bundle.decoder);
  meta["has_regressor"] = bundle.regressor.has_value();
  if (bundle.regressor) {
    json heads = json::array();
    for (size_t h = 0; h < bundle.regressor->heads.size(); ++h) {
      heads.push_back(json{{"name", bundle.regressor->score_names[h]},
                           {"clip_max", bundle.regressor->clip_max[h]},
                           {"net", mlp_meta(bundle.regressor->heads[h])}});
    }
    meta["regressor"] = std::move(heads);
  }
  const std::string meta_str = meta.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u64(out, meta_str.size());
  out.append(meta_str);

  std::uint32_t count = static_cast<std::uint32_t>(bundle.encoder.param_views().size());
  if (bundle.decoder) count += static_cast<std::uint32_t>(bundle.decoder->param_views().size());
  if (bundle.regressor)
    for (const auto& h : bundle.regressor->heads)
      count += static_cast<std::uint32_t>(h.param_views().size());
  put_u32(out, count);

  put_mlp_params(out, "encoder", bundle.encoder);
  if (bundle.decoder) put_mlp_params(out, "decoder", *bundle.decoder);
  if (bundle.regressor)
    for (size_t h = 0; h < bundle.regressor->heads.size(); ++h)
      put_mlp_params(out, "regressor/" + bundle.regressor->score_names[h],
                     bundle.regressor->heads[h]);

  csv::write_file(path, out);
}

ModelBundle load_model(const std::string& path) {
  const std::string data = csv::read_file(path);
  Reader r(data, path);
  r.expect_magic();
  const std::uint64_t meta_len = r.u64();
  const json meta = json::parse(r.bytes(meta_len));
  if (meta.at("format_version").get<int>() != 1)
    throw std::runtime_error(path + ": unsupported model format_version");

  const std::uint32_t count = r.u32();
  std::map<std::string, Eigen::VectorXd> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const std::uint64_t n = r.u64();
    if (!arrays.emplace(name, r.doubles(n)).second)
      throw std::runtime_error(path + ": duplicate array '" + name + "'");
  }
  if (!r.done()) throw std::runtime_error(path + ": trailing bytes after arrays");

  ModelBundle bundle;
  bundle.encoder = Mlp(mlp_spec_from_meta(meta.at("encoder")));
  load_mlp_params(bundle.encoder, "encoder", arrays, path);
  if (meta.at("has_decoder").get<bool>()) {
    bundle.decoder = Mlp(mlp_spec_from_meta(meta.at("decoder")));
    load_mlp_params(*bundle.decoder, "decoder", arrays, path);
  }
  if (meta.at("has_regressor").get<bool>()) {
    Regressor reg;
    for (const auto& h : meta.at("regressor")) {
      reg.score_names.push_back(h.at("name").get<std::string>());
      reg.clip_max.push_back(h.at("clip_max").get<double>());
      Mlp net(mlp_spec_from_meta(h.at("net")));
      load_mlp_params(net, "regressor/" + reg.score_names.back(), arrays, path);
      reg.heads.push_back(std::move(net));
    }
    bundle.regressor = std::move(reg);
  }
  return bundle;
}

}  // namespace chronocon
