#include "dvgnn/model_io.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dvgnn/csv.hpp"
#include "dvgnn/errors.hpp"

namespace dvgnn {
namespace {

constexpr char kMagic[4] = {'D', 'V', 'G', 'N'};

template <class U>
void put(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw DataError(origin_ + ": truncated model file while reading " + what + " at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_params(const ParamStore& store) {
  std::string out(kMagic, 4);
  put<std::uint16_t>(out, kModelFormatVersion);
  auto names = store.names();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = store.value(name);
    if (name.size() > 0xffff) throw ContractError("parameter name too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamStore decode_params(const std::string& bytes, const std::string& origin) {
  Reader in(bytes, origin);
  if (in.take(4, "magic") != std::string(kMagic, 4)) throw DataError(origin + ": not a DVGN model file");
  auto version = in.get<std::uint16_t>("version");
  if (version != kModelFormatVersion)
    throw DataError(origin + ": unsupported model format version " + std::to_string(version));
  auto count = in.get<std::uint32_t>("record count");
  ParamStore store;
  for (std::uint32_t r = 0; r < count; ++r) {
    auto len = in.get<std::uint16_t>("name length");
    std::string name = in.take(len, "name");
    auto rank = in.get<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(in.get<std::uint32_t>("dimension"));
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = std::bit_cast<double>(in.get<std::uint64_t>("values"));
    if (store.contains(name)) throw DataError(origin + ": duplicate parameter " + name);
    store.add(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw DataError(origin + ": trailing bytes after byte " + std::to_string(in.pos()));
  return store;
}

void save_params(const std::string& path, const ParamStore& store) {
  csv::write_file_atomic(path, encode_params(store));
}

ParamStore load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_params(bytes, path);
}

std::string run_config_text(const RunConfig& c) {
  using csv::format_double;
  const auto& t = c.train;
  std::ostringstream o;
  o << "lr-graph = " << format_double(t.lr_graph) << "\n"
    << "lr-forecast = " << format_double(t.lr_forecast) << "\n"
    << "epochs-graph = " << t.epochs_graph << "\n"
    << "epochs-forecast = " << t.epochs_forecast << "\n"
    << "batch = " << t.batch << "\n"
    << "seed = " << t.seed << "\n"
    << "reg-weight = " << format_double(t.reg_weight) << "\n"
    << "grad-clip = " << format_double(t.grad_clip) << "\n"
    << "joint = " << (t.joint ? "true" : "false") << "\n"
    << "ablation = " << (t.static_graph ? "static" : "dynamic") << "\n"
    << "hidden1 = " << c.hidden1 << "\n"
    << "hidden2 = " << c.hidden2 << "\n"
    << "p = " << c.p << "\n"
    << "horizon = " << c.horizon << "\n"
    << "threshold = " << format_double(c.threshold) << "\n"
    << "temporal-kernel = " << c.temporal_kernel << "\n"
    << "channels = " << c.channels << "\n"
    << "mask = " << c.mask << "\n"
    << "logsigma-head = " << (c.linear_logsigma ? "linear" : "sigmoid") << "\n"
    << "decoder = " << (c.decoder_mode == DecoderMode::Standardized ? "standardized" : "posterior") << "\n"
    << "edge-train-fraction = " << format_double(c.edge_train_fraction) << "\n";
  return o.str();
}

namespace {

template <class T>
T number(const std::string& key, const std::string& v, const std::string& origin) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw DataError(origin + ": bad value '" + v + "' for " + key);
  return out;
}

bool flag(const std::string& key, const std::string& v, const std::string& origin) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw DataError(origin + ": bad boolean '" + v + "' for " + key);
}

std::string choice(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed,
                   const std::string& origin) {
  for (const char* a : allowed)
    if (v == a) return v;
  throw DataError(origin + ": bad value '" + v + "' for " + key);
}

}  // namespace

RunConfig run_config_from(const std::map<std::string, std::string>& kv, const std::string& origin) {
  RunConfig c;
  auto& t = c.train;
  for (const auto& [key, v] : kv) {
    if (key == "lr-graph") t.lr_graph = number<double>(key, v, origin);
    else if (key == "lr-forecast") t.lr_forecast = number<double>(key, v, origin);
    else if (key == "epochs-graph") t.epochs_graph = number<std::size_t>(key, v, origin);
    else if (key == "epochs-forecast") t.epochs_forecast = number<std::size_t>(key, v, origin);
    else if (key == "batch") t.batch = number<std::size_t>(key, v, origin);
    else if (key == "seed") t.seed = number<std::uint64_t>(key, v, origin);
    else if (key == "reg-weight") t.reg_weight = number<double>(key, v, origin);
    else if (key == "grad-clip") t.grad_clip = number<double>(key, v, origin);
    else if (key == "joint") t.joint = flag(key, v, origin);
    else if (key == "ablation") t.static_graph = choice(key, v, {"static", "dynamic"}, origin) == "static";
    else if (key == "hidden1") c.hidden1 = number<std::size_t>(key, v, origin);
    else if (key == "hidden2") c.hidden2 = number<std::size_t>(key, v, origin);
    else if (key == "p") c.p = number<std::size_t>(key, v, origin);
    else if (key == "horizon") c.horizon = number<std::size_t>(key, v, origin);
    else if (key == "threshold") c.threshold = number<double>(key, v, origin);
    else if (key == "temporal-kernel") c.temporal_kernel = number<std::size_t>(key, v, origin);
    else if (key == "channels") c.channels = number<std::size_t>(key, v, origin);
    else if (key == "mask") c.mask = choice(key, v, {"on", "off", "auto"}, origin);
    else if (key == "logsigma-head") c.linear_logsigma = choice(key, v, {"sigmoid", "linear"}, origin) == "linear";
    else if (key == "decoder")
      c.decoder_mode = choice(key, v, {"standardized", "posterior"}, origin) == "standardized"
                           ? DecoderMode::Standardized
                           : DecoderMode::Posterior;
    else if (key == "edge-train-fraction") c.edge_train_fraction = number<double>(key, v, origin);
    // Other keys (dataset paths, output directory) belong to the command line.
  }
  return c;
}

RunConfig load_run_config(const std::string& path) { return run_config_from(csv::read_key_values(path), path); }

}  // namespace dvgnn
