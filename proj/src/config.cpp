#include "ttrec/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace ttrec {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long r = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

double to_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

} // namespace

std::vector<std::int64_t> parse_int_list(const std::string& s) {
    std::vector<std::int64_t> out;
    std::istringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        out.push_back(to_int("factor list", part));
    }
    if (out.empty()) throw ConfigError("factor list: expected comma-separated integers, got '" + s + "'");
    return out;
}

ModelConfig RunConfig::teacher_model(std::int64_t num_items) const {
    ModelConfig m = model;
    m.num_items = num_items;
    m.mode = EmbeddingMode::kDense;
    return m;
}

ModelConfig RunConfig::student_model(std::int64_t num_items) const {
    ModelConfig m = model;
    m.num_items = num_items;
    m.mode = student_mode;
    m.shape = student_shape;
    m.shape.num_items = num_items;
    m.shape.embed_dim = m.embed_dim;
    // pad the leading item factor up if the published plan is smaller than
    // this catalog
    std::int64_t prod = 1;
    for (std::size_t k = 1; k < m.shape.item_factors.size(); ++k) prod *= m.shape.item_factors[k];
    if (!m.shape.item_factors.empty()) {
        const std::int64_t lead = (num_items + prod - 1) / prod;
        if (m.shape.item_factors[0] * prod < num_items) m.shape.item_factors[0] = lead;
    }
    return m;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "model.embed_dim") model.embed_dim = to_int(key, v);
    else if (key == "model.num_items") model.num_items = to_int(key, v);
    else if (key == "model.max_seq_len") model.max_seq_len = to_int(key, v);
    else if (key == "model.num_layers") model.num_layers = static_cast<int>(to_int(key, v));
    else if (key == "model.num_heads") model.num_heads = static_cast<int>(to_int(key, v));
    else if (key == "model.dropout") model.dropout_p = to_real(key, v);
    else if (key == "student.item_factors") student_shape.item_factors = parse_int_list(v);
    else if (key == "student.dim_factors") student_shape.dim_factors = parse_int_list(v);
    else if (key == "student.rank") student_shape.rank = to_int(key, v);
    else if (key == "student.stp_divisor") student_shape.stp_divisor = to_int(key, v);
    else if (key == "student.mode") student_mode = mode_from_name(v);
    else if (key == "kd.beta1") kd.beta1 = to_real(key, v);
    else if (key == "kd.beta2") kd.beta2 = to_real(key, v);
    else if (key == "kd.beta3") kd.beta3 = to_real(key, v);
    else if (key == "kd.tau") kd.tau = to_real(key, v);
    else if (key == "kd.hot_fraction") kd.hot_fraction = to_real(key, v);
    else if (key == "train.lr") train.lr = to_real(key, v);
    else if (key == "train.batch_size") train.batch_size = static_cast<int>(to_int(key, v));
    else if (key == "train.epochs") train.epochs = static_cast<int>(to_int(key, v));
    else if (key == "train.l2") train.l2 = to_real(key, v);
    else if (key == "train.patience") train.patience = static_cast<int>(to_int(key, v));
    else if (key == "train.seed") train.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "train.val_cap") train.val_cap = to_int(key, v);
    else if (key == "synth.num_items") synth.num_items = to_int(key, v);
    else if (key == "synth.num_sessions") synth.num_sessions = to_int(key, v);
    else if (key == "synth.min_length") synth.min_length = to_int(key, v);
    else if (key == "synth.max_length") synth.max_length = to_int(key, v);
    else if (key == "synth.sharpness") synth.sharpness = to_real(key, v);
    else if (key == "synth.skew") synth.skew = to_real(key, v);
    else if (key == "synth.seed") synth.seed = static_cast<std::uint64_t>(to_int(key, v));
    else throw ConfigError("unknown configuration key '" + key + "'");
}

void RunConfig::validate() const {
    if (model.embed_dim <= 0) throw ConfigError("model.embed_dim: must be positive");
    ModelConfig probe = model;
    probe.num_items = model.num_items > 0 ? model.num_items : 1;
    probe.mode = EmbeddingMode::kDense;
    probe.validate();
    kd.validate();
    train.validate();
    synth.validate();
    if (!student_shape.item_factors.empty()) {
        FactorizedShape s = student_shape;
        s.embed_dim = model.embed_dim;
        s.num_items = s.padded_items(); // catalog size arrives with the data
        s.validate(student_mode == EmbeddingMode::kTtd);
    }
}

RunConfig preset(const std::string& name) {
    RunConfig c;
    c.kd.batch_size = c.train.batch_size;
    c.kd.epochs = c.train.epochs;
    c.kd.learning_rate = c.train.lr;
    if (name == "tmall") {
        c.model.embed_dim = 128;
        c.model.num_layers = 1;
        c.model.num_heads = 1;
        c.model.dropout_p = 0.5;
        c.student_shape.item_factors = {169, 241};
        c.student_shape.dim_factors = {16, 8};
        c.student_shape.rank = 60;
        c.student_shape.stp_divisor = 2;
        c.kd.beta1 = 0.1;
        c.kd.beta2 = 0.001;
        c.kd.beta3 = 0.8;
    } else if (name == "retailrocket") {
        c.model.embed_dim = 256;
        c.model.num_layers = 1;
        c.model.num_heads = 2;
        c.model.dropout_p = 0.2;
        c.student_shape.item_factors = {117, 316};
        c.student_shape.dim_factors = {16, 16};
        c.student_shape.rank = 100;
        c.student_shape.stp_divisor = 2;
        c.kd.beta1 = 0.005;
        c.kd.beta2 = 0.1;
        c.kd.beta3 = 0.8;
    } else if (name == "synthetic") {
        c.model.embed_dim = 32;
        c.model.num_layers = 1;
        c.model.num_heads = 2;
        c.model.dropout_p = 0.1;
        c.student_shape.item_factors = {10, 20};
        c.student_shape.dim_factors = {8, 4};
        c.student_shape.rank = 4;
        c.student_shape.stp_divisor = 2;
        c.kd.beta1 = 0.1;
        c.kd.beta2 = 0.001;
        c.kd.beta3 = 0.8;
        c.synth = SynthConfig{};
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected tmall, retailrocket or synthetic)");
    }
    return c;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        if (section.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": key outside any [section]");
        cfg.set(section + "." + key, t.substr(eq + 1));
    }
}

void apply_env_overrides(RunConfig& cfg) {
    const std::string prefix = "TTREC_";
    for (char** env = environ; env && *env; ++env) {
        const std::string entry(*env);
        if (entry.rfind(prefix, 0) != 0) continue;
        const std::size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(prefix.size(), eq - prefix.size());
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        const std::size_t us = key.find('_');
        if (us == std::string::npos) continue;
        cfg.set(key.substr(0, us) + "." + key.substr(us + 1), entry.substr(eq + 1));
    }
}

std::string model_config_to_text(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "[model]\n";
    os << "num_items = " << cfg.num_items << "\n";
    os << "embed_dim = " << cfg.embed_dim << "\n";
    os << "max_seq_len = " << cfg.max_seq_len << "\n";
    os << "num_layers = " << cfg.num_layers << "\n";
    os << "num_heads = " << cfg.num_heads << "\n";
    os << "dropout = " << cfg.dropout_p << "\n";
    os << "mode = " << mode_name(cfg.mode) << "\n";
    if (cfg.mode != EmbeddingMode::kDense) {
        os << "[student]\n";
        os << "item_factors = ";
        for (std::size_t k = 0; k < cfg.shape.item_factors.size(); ++k)
            os << (k ? "," : "") << cfg.shape.item_factors[k];
        os << "\ndim_factors = ";
        for (std::size_t k = 0; k < cfg.shape.dim_factors.size(); ++k)
            os << (k ? "," : "") << cfg.shape.dim_factors[k];
        os << "\nrank = " << cfg.shape.rank << "\n";
        os << "stp_divisor = " << cfg.shape.stp_divisor << "\n";
    }
    return os.str();
}

ModelConfig model_config_from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = section + "." + trim(t.substr(0, eq));
        const std::string v = trim(t.substr(eq + 1));
        if (key == "model.num_items") cfg.num_items = to_int(key, v);
        else if (key == "model.embed_dim") cfg.embed_dim = to_int(key, v);
        else if (key == "model.max_seq_len") cfg.max_seq_len = to_int(key, v);
        else if (key == "model.num_layers") cfg.num_layers = static_cast<int>(to_int(key, v));
        else if (key == "model.num_heads") cfg.num_heads = static_cast<int>(to_int(key, v));
        else if (key == "model.dropout") cfg.dropout_p = to_real(key, v);
        else if (key == "model.mode") cfg.mode = mode_from_name(v);
        else if (key == "student.item_factors") cfg.shape.item_factors = parse_int_list(v);
        else if (key == "student.dim_factors") cfg.shape.dim_factors = parse_int_list(v);
        else if (key == "student.rank") cfg.shape.rank = to_int(key, v);
        else if (key == "student.stp_divisor") cfg.shape.stp_divisor = to_int(key, v);
        else throw ConfigError("checkpoint header: unknown key '" + key + "'");
    }
    if (cfg.mode != EmbeddingMode::kDense) {
        cfg.shape.num_items = cfg.num_items;
        cfg.shape.embed_dim = cfg.embed_dim;
    }
    return cfg;
}

} // namespace ttrec
