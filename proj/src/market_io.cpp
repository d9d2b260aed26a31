#include "mcgrad/market_io.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mcgrad {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<double> numbers(const std::string& text, const std::string& where) {
    std::istringstream is(text);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) {
            throw std::runtime_error(where + ": not a number: '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

} // namespace

MarketConfig parse_market(std::istream& in, const std::string& source) {
    MarketConfig cfg;
    bool have_spot = false;
    double reference_vol = -1.0;
    std::vector<std::size_t> unpriced;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(where + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const auto vals = numbers(line.substr(eq + 1), where);
        if (key == "spot" && vals.size() == 1) {
            cfg.market.spot = vals[0];
            have_spot = true;
        } else if (key == "reference_vol" && vals.size() == 1) {
            reference_vol = vals[0];
        } else if (key == "option" && (vals.size() == 2 || vals.size() == 3)) {
            cfg.market.options.push_back({vals[0], vals[1], vals.size() == 3 ? vals[2] : 0.0});
            if (vals.size() == 2) unpriced.push_back(cfg.market.options.size() - 1);
        } else if (key == "knot" && vals.size() == 2) {
            cfg.curve.times.push_back(vals[0]);
            cfg.curve.vols.push_back(vals[1]);
        } else {
            throw std::runtime_error(where + ": unrecognized entry '" + key + "' with " +
                                     std::to_string(vals.size()) + " value(s)");
        }
    }
    if (!have_spot) {
        throw std::runtime_error(source + ": missing 'spot'");
    }
    if (!unpriced.empty()) {
        if (!(reference_vol >= 0.0)) {
            throw std::runtime_error(source + ": options without prices need 'reference_vol'");
        }
        for (std::size_t i : unpriced) {
            auto& o = cfg.market.options[i];
            o.price = black_scholes_call(cfg.market.spot, o.strike, reference_vol, o.expiry);
        }
    }
    cfg.market.validate();
    cfg.curve.validate();
    return cfg;
}

MarketConfig load_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open market file: " + path);
    }
    return parse_market(in, path);
}

void write_market(std::ostream& out, const MarketConfig& config) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "spot = " << config.market.spot << "\n";
    for (const auto& o : config.market.options) {
        out << "option = " << o.strike << " " << o.expiry << " " << o.price << "\n";
    }
    for (std::size_t k = 0; k < config.curve.size(); ++k) {
        out << "knot = " << config.curve.times[k] << " " << config.curve.vols[k] << "\n";
    }
}

void save_market(const std::string& path, const MarketConfig& config) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write market file: " + path);
    }
    write_market(out, config);
}

} // namespace mcgrad
