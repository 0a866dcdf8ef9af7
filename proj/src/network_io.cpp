#include "netexpr/network_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <type_traits>
#include <istream>
#include <ostream>
#include <sstream>

#include "netexpr/rng.hpp"

namespace netexpr {

namespace {

constexpr const char* kMagic = "netexpr-network";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << fmt(m(r, c));
    out << '\n';
  }
}

void write_layer(std::ostream& out, const std::string& name, const Layer& layer) {
  out << name << " weights " << layer.fan_out() << ' ' << layer.fan_in() << '\n';
  write_matrix(out, layer.weights);
  out << name << " bias " << layer.fan_out() << '\n';
  write_matrix(out, layer.bias.transpose());
}

class Reader {
public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word(const char* what) {
    std::string w;
    if (!(in_ >> w)) throw FormatError(std::string("network file truncated while reading ") + what);
    return w;
  }
  void expect(const std::string& token) {
    const std::string w = word(token.c_str());
    if (w != token) throw FormatError("network file: expected '" + token + "', found '" + w + "'");
  }
  template <typename T>
  T number(const char* what) {
    const std::string w = word(what);
    if constexpr (std::is_floating_point_v<T>) {
      char* end = nullptr;
      const double v = std::strtod(w.c_str(), &end);
      if (end == w.c_str() || *end != '\0') throw FormatError(std::string("network file: bad number for ") + what);
      return static_cast<T>(v);
    } else {
      std::istringstream ss(w);
      T v{};
      if (!(ss >> v) || !ss.eof()) throw FormatError(std::string("network file: bad integer for ") + what);
      return v;
    }
  }

  Layer layer(const std::string& name) {
    expect(name);
    expect("weights");
    const auto rows = number<std::size_t>("rows");
    const auto cols = number<std::size_t>("cols");
    Layer layer{Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                Vector(static_cast<Eigen::Index>(rows))};
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = number<double>("weight");
    expect(name);
    expect("bias");
    if (number<std::size_t>("bias length") != rows) throw FormatError("network file: bias length mismatch");
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = number<double>("bias");
    return layer;
  }

private:
  std::istream& in_;
};

}  // namespace

void write_network(std::ostream& out, const Network& net, const std::optional<InitSpec>& init) {
  out << kMagic << ' ' << kNetworkFormatVersion << '\n';
  out << "activation " << to_string(net.activation()) << '\n';
  out << "input_dim " << net.input_dim() << '\n';
  out << "hidden_widths";
  for (std::size_t d = 0; d < net.depth(); ++d) out << ' ' << net.width(d);
  out << '\n';
  out << "readout " << (net.has_readout() ? std::to_string(net.readout()->fan_out()) : std::string("none")) << '\n';
  if (init) {
    out << "init " << fmt(init->sigma_w_sq) << ' ' << fmt(init->sigma_b_sq) << ' ' << init->seed << ' '
        << Rng::kAlgorithmId << '\n';
  } else {
    out << "init none\n";
  }
  for (std::size_t d = 0; d < net.depth(); ++d) write_layer(out, "layer", net.hidden(d));
  if (net.has_readout()) write_layer(out, "readout", *net.readout());
  out << "end\n";
}

StoredNetwork read_network(std::istream& in) {
  Reader r(in);
  r.expect(kMagic);
  const int version = r.number<int>("version");
  if (version != kNetworkFormatVersion)
    throw FormatError("network file: unsupported version " + std::to_string(version));
  r.expect("activation");
  const Activation act = parse_activation(r.word("activation"));
  r.expect("input_dim");
  const auto input_dim = r.number<std::size_t>("input_dim");
  r.expect("hidden_widths");
  std::vector<std::size_t> widths;
  std::string w;
  while ((w = r.word("hidden_widths")) != "readout") widths.push_back(std::stoul(w));
  const std::string readout_token = r.word("readout");
  r.expect("init");
  std::optional<InitSpec> init;
  const std::string init_token = r.word("init");
  if (init_token != "none") {
    InitSpec spec;
    char* end = nullptr;
    spec.sigma_w_sq = std::strtod(init_token.c_str(), &end);
    if (end == init_token.c_str() || *end != '\0') throw FormatError("network file: bad number for sigma_w_sq");
    spec.sigma_b_sq = r.number<double>("sigma_b_sq");
    spec.seed = r.number<std::uint64_t>("seed");
    const std::string prng = r.word("prng id");
    if (prng != Rng::kAlgorithmId) throw FormatError("network file: unknown PRNG id '" + prng + "'");
    init = spec;
  }
  std::vector<Layer> hidden;
  for (std::size_t d = 0; d < widths.size(); ++d) hidden.push_back(r.layer("layer"));
  std::optional<Layer> readout;
  if (readout_token != "none") readout = r.layer("readout");
  r.expect("end");
  Network net(std::move(hidden), act, std::move(readout));
  if (net.input_dim() != input_dim) throw FormatError("network file: input_dim does not match first layer");
  for (std::size_t d = 0; d < widths.size(); ++d)
    if (net.width(d) != widths[d]) throw FormatError("network file: hidden_widths do not match layers");
  return StoredNetwork{std::move(net), init};
}

std::string network_to_string(const Network& net, const std::optional<InitSpec>& init) {
  std::ostringstream out;
  write_network(out, net, init);
  return out.str();
}

}  // namespace netexpr
