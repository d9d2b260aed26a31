#pragma once

// Plain-text market description.
//
//     # comment
//     spot   = 100
//     option = <strike> <expiry> [<price>]
//     knot   = <time> <vol>
//     reference_vol = 0.2      # optional
//
// One `option` line per quote and one `knot` line per curve knot, in any
// order. An option without a price is priced in closed form under a flat
// curve at `reference_vol`, which must then be present.

#include "mcgrad/model.hpp"

#include <iosfwd>
#include <string>

namespace mcgrad {

struct MarketConfig {
    MarketSpec market;
    VolCurve curve;
};

MarketConfig parse_market(std::istream& in, const std::string& source = "<stream>");
MarketConfig load_market(const std::string& path);

void write_market(std::ostream& out, const MarketConfig& config);
void save_market(const std::string& path, const MarketConfig& config);

} // namespace mcgrad
