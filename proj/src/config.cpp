#include "laser/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "laser/errors.hpp"
#include "laser/model.hpp"

namespace laser {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cur = trim(cur);
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
    T v{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError("config key '" + key + "': cannot parse '" + value + "'");
    return v;
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ParseError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    bool beta_alpha_set = false, beta_beta_set = false;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    std::string section;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed section header '" + raw + "'");
            section = line.substr(1, line.size() - 2);
            if (section != "dataset" && section != "model" && section != "training" && section != "output")
                throw ParseError(origin + ":" + std::to_string(lineno) + ": unknown section '" + section + "'");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + raw + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty()) continue;  // blank value leaves the default / stays unset

        if (key == "source") cfg.source = value;
        else if (key == "n_samples") cfg.n_samples = parse_number<int>(value, key);
        else if (key == "n_test") cfg.n_test = parse_number<int>(value, key);
        else if (key == "num_clients") cfg.num_clients = parse_number<int>(value, key);
        else if (key == "block_widths") {
            cfg.block_widths.clear();
            for (const std::string& w : split_list(value)) cfg.block_widths.push_back(parse_number<int>(w, key));
        } else if (key == "num_classes") cfg.num_classes = parse_number<int>(value, key);
        else if (key == "informative_overlap") cfg.informative_overlap = parse_number<double>(value, key);
        else if (key == "noise") cfg.noise = parse_number<double>(value, key);
        else if (key == "features_csv") cfg.features_csv = value;
        else if (key == "block_schema") {
            cfg.block_schema.clear();
            for (const std::string& range : split_list(value)) {
                const std::size_t colon = range.find(':');
                if (colon == std::string::npos)
                    throw ParseError("config key 'block_schema': expected lo:hi ranges, got '" + range + "'");
                cfg.block_schema.emplace_back(parse_number<int>(trim(range.substr(0, colon)), key),
                                              parse_number<int>(trim(range.substr(colon + 1)), key));
            }
        } else if (key == "d_rep") cfg.d_rep = parse_number<int>(value, key);
        else if (key == "hidden") {
            cfg.hidden.clear();
            for (const std::string& h : split_list(value))
                if (!h.empty()) cfg.hidden.push_back(parse_number<int>(h, key));
        } else if (key == "methods") cfg.methods = split_list(value);
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const std::string& s : split_list(value)) cfg.seeds.push_back(parse_number<std::uint64_t>(s, key));
        } else if (key == "p_miss_train") {
            cfg.p_miss_train.clear();
            for (const std::string& p : split_list(value)) cfg.p_miss_train.push_back(parse_number<double>(p, key));
        } else if (key == "p_miss_test") {
            cfg.p_miss_test.clear();
            for (const std::string& p : split_list(value)) cfg.p_miss_test.push_back(parse_number<double>(p, key));
        } else if (key == "beta_alpha") {
            cfg.beta_alpha = parse_number<double>(value, key);
            beta_alpha_set = true;
        } else if (key == "beta_beta") {
            cfg.beta_beta = parse_number<double>(value, key);
            beta_beta_set = true;
        } else if (key == "epochs") cfg.epochs = parse_number<int>(value, key);
        else if (key == "batch_size") cfg.batch_size = parse_number<int>(value, key);
        else if (key == "lr") cfg.lr = parse_number<double>(value, key);
        else if (key == "lr_schedule") cfg.lr_schedule = value;
        else if (key == "plugvfl_dropout") cfg.plugvfl_dropout = parse_number<double>(value, key);
        else if (key == "record_exact_loss") cfg.record_exact_loss = parse_bool(value, key);
        else if (key == "export_messages") cfg.export_messages = parse_bool(value, key);
        else if (key == "out_dir") cfg.out_dir = value;
        else
            throw ParseError(origin + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    }
    cfg.has_beta = beta_alpha_set || beta_beta_set;
    if (beta_alpha_set != beta_beta_set) {
        // remembered so validate() can report the half-set pair
        if (!beta_alpha_set) cfg.beta_alpha = -1.0;
        if (!beta_beta_set) cfg.beta_beta = -1.0;
    }
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::vector<Finding> validate_config(const RunConfig& cfg) {
    std::vector<Finding> findings;
    auto flag = [&](const std::string& field, const std::string& msg) { findings.push_back({field, msg}); };

    if (cfg.source != "synthetic" && cfg.source != "csv")
        flag("source", "must be 'synthetic' or 'csv', got '" + cfg.source + "'");
    if (cfg.num_clients < 1) flag("num_clients", "must be at least 1");
    if (cfg.source == "synthetic") {
        if (cfg.n_samples < 1) flag("n_samples", "must be positive");
        if (cfg.n_test < 1) flag("n_test", "must be positive");
        if (static_cast<int>(cfg.block_widths.size()) != cfg.num_clients)
            flag("block_widths", "expected " + std::to_string(cfg.num_clients) + " entries, got " +
                                     std::to_string(cfg.block_widths.size()));
        for (int w : cfg.block_widths)
            if (w < 1) flag("block_widths", "widths must be positive");
        if (cfg.num_classes < 2) flag("num_classes", "must be at least 2");
        if (!(cfg.informative_overlap >= 0.0 && cfg.informative_overlap <= 1.0))
            flag("informative_overlap", "must lie in [0,1]");
        if (!(cfg.noise >= 0.0)) flag("noise", "must be nonnegative");
    } else if (cfg.source == "csv") {
        if (cfg.features_csv.empty())
            flag("features_csv", "required when source = csv");
        else if (!std::filesystem::exists(cfg.features_csv))
            flag("features_csv", "file '" + cfg.features_csv + "' does not exist");
        if (static_cast<int>(cfg.block_schema.size()) != cfg.num_clients)
            flag("block_schema", "expected " + std::to_string(cfg.num_clients) + " ranges, got " +
                                     std::to_string(cfg.block_schema.size()));
        int cursor = 0;
        for (const auto& [lo, hi] : cfg.block_schema) {
            if (lo != cursor || hi <= lo) {
                flag("block_schema", "ranges must be contiguous half-open intervals starting at 0");
                break;
            }
            cursor = hi;
        }
    }

    if (cfg.d_rep < 1) flag("d_rep", "must be positive");
    for (int h : cfg.hidden)
        if (h < 1) flag("hidden", "hidden widths must be positive");

    if (cfg.methods.empty()) flag("methods", "at least one method required");
    for (const std::string& m : cfg.methods) {
        try {
            const Method method = parse_method(m);
            if (method == Method::Combinatorial && cfg.num_clients > 10)
                flag("methods", "combinatorial is capped at 10 clients, got " + std::to_string(cfg.num_clients));
        } catch (const InputError&) {
            flag("methods", "unknown method '" + m + "'");
        }
    }
    if (cfg.seeds.empty()) flag("seeds", "at least one seed required");

    for (std::size_t i = 0; i < cfg.p_miss_train.size(); ++i)
        if (!(cfg.p_miss_train[i] >= 0.0 && cfg.p_miss_train[i] <= 1.0))
            flag("p_miss_train", "entry " + std::to_string(i + 1) + " = " + fmt(cfg.p_miss_train[i]) +
                                     " is outside [0,1]");
    for (std::size_t i = 0; i < cfg.p_miss_test.size(); ++i)
        if (!(cfg.p_miss_test[i] >= 0.0 && cfg.p_miss_test[i] <= 1.0))
            flag("p_miss_test", "entry " + std::to_string(i + 1) + " = " + fmt(cfg.p_miss_test[i]) +
                                    " is outside [0,1]");
    if (cfg.p_miss_train.empty()) flag("p_miss_train", "at least one probability required");
    if (cfg.p_miss_test.empty()) flag("p_miss_test", "at least one probability required");

    if (cfg.has_beta) {
        if (cfg.beta_alpha < 0.0) flag("beta_alpha", "beta_beta is set but beta_alpha is not");
        else if (!(cfg.beta_alpha > 0.0)) flag("beta_alpha", "must be positive");
        if (cfg.beta_beta < 0.0) flag("beta_beta", "beta_alpha is set but beta_beta is not");
        else if (!(cfg.beta_beta > 0.0)) flag("beta_beta", "must be positive");
    }

    if (cfg.epochs < 1) flag("epochs", "must be at least 1");
    if (cfg.batch_size < 1) flag("batch_size", "must be at least 1");
    if (!(cfg.lr > 0.0)) flag("lr", "must be positive");
    if (cfg.lr_schedule != "constant" && cfg.lr_schedule != "tuned_sqrt")
        flag("lr_schedule", "must be 'constant' or 'tuned_sqrt'");
    if (!(cfg.plugvfl_dropout >= 0.0 && cfg.plugvfl_dropout < 1.0)) flag("plugvfl_dropout", "must lie in [0,1)");
    if (cfg.out_dir.empty()) flag("out_dir", "must not be empty");
    return findings;
}

std::string canonical_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "source=" << cfg.source << "\n";
    out << "n_samples=" << cfg.n_samples << "\nn_test=" << cfg.n_test << "\n";
    out << "num_clients=" << cfg.num_clients << "\nblock_widths=";
    for (std::size_t i = 0; i < cfg.block_widths.size(); ++i) out << (i ? "," : "") << cfg.block_widths[i];
    out << "\nnum_classes=" << cfg.num_classes << "\ninformative_overlap=" << fmt(cfg.informative_overlap)
        << "\nnoise=" << fmt(cfg.noise) << "\nfeatures_csv=" << cfg.features_csv << "\nblock_schema=";
    for (std::size_t i = 0; i < cfg.block_schema.size(); ++i)
        out << (i ? "," : "") << cfg.block_schema[i].first << ":" << cfg.block_schema[i].second;
    out << "\nd_rep=" << cfg.d_rep << "\nhidden=";
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) out << (i ? "," : "") << cfg.hidden[i];
    out << "\nmethods=";
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) out << (i ? "," : "") << cfg.methods[i];
    out << "\nseeds=";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
    out << "\np_miss_train=";
    for (std::size_t i = 0; i < cfg.p_miss_train.size(); ++i) out << (i ? "," : "") << fmt(cfg.p_miss_train[i]);
    out << "\np_miss_test=";
    for (std::size_t i = 0; i < cfg.p_miss_test.size(); ++i) out << (i ? "," : "") << fmt(cfg.p_miss_test[i]);
    out << "\nbeta=";
    if (cfg.has_beta) out << fmt(cfg.beta_alpha) << ":" << fmt(cfg.beta_beta);
    out << "\nepochs=" << cfg.epochs << "\nbatch_size=" << cfg.batch_size << "\nlr=" << fmt(cfg.lr)
        << "\nlr_schedule=" << cfg.lr_schedule << "\nplugvfl_dropout=" << fmt(cfg.plugvfl_dropout)
        << "\nrecord_exact_loss=" << (cfg.record_exact_loss ? 1 : 0)
        << "\nexport_messages=" << (cfg.export_messages ? 1 : 0) << "\n";
    return out.str();
}

std::string config_hash(const RunConfig& cfg) {
    const std::string canon = canonical_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xF];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

}  // namespace laser
