#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "netexpr/netcore.hpp"

namespace netexpr {

// Text serialization of a Network. Layout is documented in
// docs/network_format.md; values are written with 17 significant digits so
// parameters round-trip bit-exactly.
inline constexpr int kNetworkFormatVersion = 1;

struct StoredNetwork {
  Network network;
  std::optional<InitSpec> init;  // present when the network was sampled
};

void write_network(std::ostream& out, const Network& net, const std::optional<InitSpec>& init = std::nullopt);
StoredNetwork read_network(std::istream& in);

std::string network_to_string(const Network& net, const std::optional<InitSpec>& init = std::nullopt);

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace netexpr
