#include "stepdiff/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stepdiff {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& Config::defaults() {
    // Registry of every accepted key with its default; unknown keys are
    // rejected at set() time.
    static const std::map<std::string, std::string> d = {
        {"grid.origin_lat", "31.643"},
        {"grid.origin_lon", "120.726"},
        {"grid.cell_size_m", "500"},
        {"grid.slice_seconds", "3600"},
        {"grid.x", "10"},
        {"grid.y", "10"},

        {"synth.l", "336"},
        {"synth.k", "5"},
        {"synth.px", "-1"},
        {"synth.py", "0"},
        {"synth.sources", "2,3,0.09;7,6,0.07"},
        {"synth.background_rate", "0.004"},
        {"synth.init_mode", "smooth-random"},
        {"synth.base_level", "35"},
        {"synth.obs_noise_sigma", "2"},
        {"synth.seed", "1"},

        {"fleet.n_vehicles", "18"},
        {"fleet.mode", "free-car"},
        {"fleet.route_period", "1"},
        {"fleet.route_len", "20"},
        {"fleet.walk_len", "8"},
        {"fleet.active_hours", ""},
        {"fleet.seed", "2"},

        {"ingest.t0", "0"},
        {"ingest.l", "336"},

        {"window.l1", "12"},
        {"window.l2", "12"},

        {"deeponet.p", "16"},
        {"deeponet.hidden", "64,64"},
        {"deeponet.iters", "800"},
        {"deeponet.lr", "1e-3"},
        {"deeponet.omega", "1"},
        {"deeponet.seed", "11"},

        {"train.mode", "10"},
        {"train.omega", "1"},
        {"train.n_iter", "2000"},
        {"train.batch", "1"},
        {"train.lr", "1e-3"},
        {"train.t", "50"},
        {"train.beta_min", "1e-4"},
        {"train.beta_max", "0.5"},
        {"train.channels", "32"},
        {"train.heads", "4"},
        {"train.blocks", "2"},
        {"train.layers", "2"},
        {"train.pde_k", "5"},
        {"train.pde_px", "-1"},
        {"train.pde_py", "0"},
        {"train.pde_external", ""},
        {"train.fit_jobs", "2"},
        {"train.seed", "7"},

        {"forecast.samples", "1"},
        {"forecast.jobs", "1"},
        {"forecast.seed", "21"},

        {"eval.truth_source", "mobile"},
        {"eval.threshold", "25"},
        {"eval.station_cells", "2,2;7,7;1,8;8,1;5,5"},
        {"eval.start_hour", "0"},

        {"ablate.n_iter", "50"},
        {"ablate.eval_windows", "3"},
        {"ablate.channels", "16"},
        {"ablate.heads", "4"},
        {"ablate.blocks", "1"},
        {"ablate.deeponet_iters", "200"},
    };
    return d;
}

Config::Config() : values_(defaults()) {}

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) + " of " + path +
                                     " is not 'key = value'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
    values_[key] = value;
}

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::out_of_range("config: unknown key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' has non-numeric value '" + s + "'");
    }
}

int Config::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        return std::stoi(s);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' has non-integer value '" + s + "'");
    }
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' has non-integer value '" + s + "'");
    }
}

std::vector<std::pair<int, int>> Config::get_cell_list(const std::string& key) const {
    std::vector<std::pair<int, int>> out;
    std::stringstream ss(get_string(key));
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (trim(item).empty()) continue;
        std::stringstream ps(item);
        std::string a, b;
        if (!std::getline(ps, a, ',') || !std::getline(ps, b, ','))
            throw std::invalid_argument("config: key '" + key + "' expects 'x,y;x,y' pairs");
        out.emplace_back(std::stoi(trim(a)), std::stoi(trim(b)));
    }
    return out;
}

std::set<int> Config::get_hour_set(const std::string& key) const {
    std::set<int> out;
    const std::string s = trim(get_string(key));
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            out.insert(std::stoi(item));
        } else {
            const int lo = std::stoi(item.substr(0, dash));
            const int hi = std::stoi(item.substr(dash + 1));
            for (int h = lo; h <= hi; ++h) out.insert(h);
        }
    }
    return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get_string(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

void Config::write(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
}

}  // namespace stepdiff
