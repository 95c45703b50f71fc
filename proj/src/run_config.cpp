#include "ssdgl/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssdgl/errors.hpp"

namespace ssdgl {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double d;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "' for " + key);
    }
    if (pos != v.size()) throw ConfigError("config: trailing characters in value '" + v + "' for " + key);
    return d;
}

long long parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long i;
    try {
        i = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value '" + v + "' for " + key);
    }
    if (pos != v.size()) throw ConfigError("config: trailing characters in value '" + v + "' for " + key);
    return i;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean value '" + v + "' for " + key + " (use true/false)");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(int(parse_int(key, trim(item))));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

std::string fmt_double(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (val.empty()) throw ConfigError("config: empty value for " + key);

        if (key == "seed") cfg.seed = std::uint64_t(parse_int(key, val));
        else if (key == "lambda") cfg.lambda = parse_double(key, val);
        else if (key == "train_count") cfg.train_count = int(parse_int(key, val));
        else if (key == "min_train") cfg.min_train = int(parse_int(key, val));
        else if (key == "alpha_strata") cfg.alpha_strata = int(parse_int(key, val));
        else if (key == "beta") cfg.beta = int(parse_int(key, val));
        else if (key == "delta") cfg.delta = parse_double(key, val);
        else if (key == "time_steps") cfg.time_steps = int(parse_int(key, val));
        else if (key == "cell_kernel") cfg.cell_kernel = int(parse_int(key, val));
        else if (key == "hidden_channels") cfg.hidden_channels = int(parse_int(key, val));
        else if (key == "reduction_ratio") cfg.reduction_ratio = int(parse_int(key, val));
        else if (key == "spatial_kernel") cfg.spatial_kernel = int(parse_int(key, val));
        else if (key == "gn_groups") cfg.gn_groups = int(parse_int(key, val));
        else if (key == "skip_channels") cfg.skip_channels = int(parse_int(key, val));
        else if (key == "encoder_channels") cfg.encoder_channels = parse_int_list(key, val);
        else if (key == "lr") cfg.lr = parse_double(key, val);
        else if (key == "momentum") cfg.momentum = parse_double(key, val);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(key, val);
        else if (key == "power") cfg.power = parse_double(key, val);
        else if (key == "max_iter") cfg.max_iter = int(parse_int(key, val));
        else if (key == "epochs") cfg.epochs = int(parse_int(key, val));
        else if (key == "checkpoint_every") cfg.checkpoint_every = int(parse_int(key, val));
        else if (key == "early_stop") cfg.early_stop = parse_bool(key, val);
        else if (key == "use_gcl") cfg.use_gcl = parse_bool(key, val);
        else if (key == "use_gjam") cfg.use_gjam = parse_bool(key, val);
        else if (key == "use_hbwl") cfg.use_hbwl = parse_bool(key, val);
        else if (key == "bands") cfg.bands = int(parse_int(key, val));
        else if (key == "num_classes") cfg.num_classes = int(parse_int(key, val));
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "seed = " << seed << '\n';
    os << "lambda = " << fmt_double(lambda) << '\n';
    os << "train_count = " << train_count << '\n';
    os << "min_train = " << min_train << '\n';
    os << "alpha_strata = " << alpha_strata << '\n';
    os << "beta = " << beta << '\n';
    os << "delta = " << fmt_double(delta) << '\n';
    os << "time_steps = " << time_steps << '\n';
    os << "cell_kernel = " << cell_kernel << '\n';
    os << "hidden_channels = " << hidden_channels << '\n';
    os << "reduction_ratio = " << reduction_ratio << '\n';
    os << "spatial_kernel = " << spatial_kernel << '\n';
    os << "gn_groups = " << gn_groups << '\n';
    os << "skip_channels = " << skip_channels << '\n';
    os << "encoder_channels = ";
    for (std::size_t i = 0; i < encoder_channels.size(); ++i)
        os << (i ? "," : "") << encoder_channels[i];
    os << '\n';
    os << "lr = " << fmt_double(lr) << '\n';
    os << "momentum = " << fmt_double(momentum) << '\n';
    os << "weight_decay = " << fmt_double(weight_decay) << '\n';
    os << "power = " << fmt_double(power) << '\n';
    os << "max_iter = " << max_iter << '\n';
    os << "epochs = " << epochs << '\n';
    os << "checkpoint_every = " << checkpoint_every << '\n';
    os << "early_stop = " << (early_stop ? "true" : "false") << '\n';
    os << "use_gcl = " << (use_gcl ? "true" : "false") << '\n';
    os << "use_gjam = " << (use_gjam ? "true" : "false") << '\n';
    os << "use_hbwl = " << (use_hbwl ? "true" : "false") << '\n';
    os << "bands = " << bands << '\n';
    os << "num_classes = " << num_classes << '\n';
    return os.str();
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (train_count < 0) fail("train_count must be >= 0");
    if (train_count == 0 && (!(lambda > 0.0) || lambda > 1.0))
        fail("lambda " + std::to_string(lambda) + " outside (0,1]");
    if (min_train < 0) fail("min_train must be >= 0");
    if (alpha_strata < 1) fail("alpha_strata must be >= 1");
    if (beta < 1) fail("beta must be >= 1");
    if (!(delta > 0.0) || !(delta < 1.0)) fail("delta must lie in (0,1)");
    if (time_steps < 1) fail("time_steps must be >= 1");
    if (cell_kernel < 1 || cell_kernel % 2 == 0) fail("cell_kernel must be odd and >= 1");
    if (hidden_channels < 1) fail("hidden_channels must be >= 1");
    if (reduction_ratio < 1) fail("reduction_ratio must be >= 1");
    if (spatial_kernel < 1 || spatial_kernel % 2 == 0) fail("spatial_kernel must be odd and >= 1");
    if (gn_groups < 1) fail("gn_groups must be >= 1");
    if (skip_channels < 1) fail("skip_channels must be >= 1");
    if (encoder_channels.size() != 4) fail("encoder_channels needs exactly 4 entries");
    for (int c : encoder_channels)
        if (c < 1) fail("encoder_channels entries must be >= 1");
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) fail("momentum must lie in [0,1)");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (power < 0.0) fail("power must be >= 0");
    if (max_iter < 1) fail("max_iter must be >= 1");
    if (epochs < 0) fail("epochs must be >= 0");
    if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    if (bands < 0) fail("bands must be >= 0");
    if (num_classes < 0) fail("num_classes must be >= 0");
}

NetConfig RunConfig::net_config() const {
    NetConfig net;
    net.time_steps = time_steps;
    net.cell_kernel = cell_kernel;
    net.hidden_channels = hidden_channels;
    net.reduction_ratio = reduction_ratio;
    net.spatial_kernel = spatial_kernel;
    net.gn_groups = gn_groups;
    net.skip_channels = skip_channels;
    net.encoder_channels = encoder_channels;
    net.num_classes = num_classes;
    net.in_bands = bands;
    net.use_gcl = use_gcl;
    net.use_gjam = use_gjam;
    return net;
}

}  // namespace ssdgl
