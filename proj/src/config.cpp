#include "tdae/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tdae/image_io.hpp"

namespace tdae::config {

namespace {

namespace pt = boost::property_tree;
using harness::ExperimentPlan;
using harness::Method;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t parse_unsigned(const std::string& text) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [p, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc() || p != end) throw ConfigError("not a non-negative integer: '" + text + "'");
    return v;
}

bool parse_bool(const std::string& text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError("not a boolean (true/false): '" + text + "'");
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

models::ModelFamilySpec parse_target(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(trim(part));
    if (parts.size() < 2 || parts.size() > 3 || parts[0].empty()) {
        throw ConfigError("target must be family:seed[:stem_seed], got '" + text + "'");
    }
    models::ModelFamilySpec spec;
    spec.family = parts[0];
    spec.seed = parse_unsigned(parts[1]);
    if (parts.size() == 3) spec.stem_seed = parse_unsigned(parts[2]);
    return spec;
}

std::string format_target(const models::ModelFamilySpec& spec) {
    std::string s = spec.family + ":" + std::to_string(spec.seed);
    if (spec.stem_seed != 0) s += ":" + std::to_string(spec.stem_seed);
    return s;
}

// Binds one config key to a plan field in both directions.
struct Field {
    std::string key;
    std::function<void(ExperimentPlan&, const std::string&)> read;
    std::function<std::string(const ExperimentPlan&)> write;
};

template <typename T>
Field unsigned_field(std::string key, T ExperimentPlan::*member) {
    return {key, [member](ExperimentPlan& p, const std::string& v) { p.*member = static_cast<T>(parse_unsigned(v)); },
            [member](const ExperimentPlan& p) { return std::to_string(p.*member); }};
}

Field number_field(std::string key, double ExperimentPlan::*member) {
    return {key, [member](ExperimentPlan& p, const std::string& v) { p.*member = parse_number(v); },
            [member](const ExperimentPlan& p) { return format_number(p.*member); }};
}

template <typename T>
Field tdae_unsigned(std::string key, T immunize::TdaeConfig::*member) {
    return {key,
            [member](ExperimentPlan& p, const std::string& v) { p.config.*member = static_cast<T>(parse_unsigned(v)); },
            [member](const ExperimentPlan& p) { return std::to_string(p.config.*member); }};
}

Field tdae_number(std::string key, double immunize::TdaeConfig::*member) {
    return {key, [member](ExperimentPlan& p, const std::string& v) { p.config.*member = parse_number(v); },
            [member](const ExperimentPlan& p) { return format_number(p.config.*member); }};
}

template <typename T>
Field source_unsigned(std::string key, T models::ModelFamilySpec::*member) {
    return {key,
            [member](ExperimentPlan& p, const std::string& v) { p.source.*member = static_cast<T>(parse_unsigned(v)); },
            [member](const ExperimentPlan& p) { return std::to_string(p.source.*member); }};
}

using Schema = std::vector<std::pair<std::string, std::vector<Field>>>;

const Schema& schema() {
    static const Schema s{
        {"tdae",
         {
             {"eps_v",
              [](ExperimentPlan& p, const std::string& v) {
                  const double x = parse_number(v);
                  const double k = std::round(x * 255.0);
                  if (!(x >= 0.0) || std::abs(x * 255.0 - k) > 1e-9) {
                      throw ConfigError("must be a non-negative multiple of 1/255, got '" + v + "'");
                  }
                  p.config.eps_v = k / 255.0;
              },
              [](const ExperimentPlan& p) {
                  return std::to_string(static_cast<long long>(std::llround(p.config.eps_v * 255.0))) + "/255";
              }},
             tdae_number("alpha", &immunize::TdaeConfig::alpha),
             tdae_unsigned("iterations", &immunize::TdaeConfig::iterations),
             tdae_number("lambda", &immunize::TdaeConfig::lambda),
             tdae_number("h", &immunize::TdaeConfig::h),
             tdae_unsigned("dpd_period", &immunize::TdaeConfig::dpd_period),
             tdae_number("eps_p", &immunize::TdaeConfig::eps_p),
             tdae_number("eta", &immunize::TdaeConfig::eta),
             tdae_unsigned("dpd_iterations", &immunize::TdaeConfig::dpd_iterations),
             {"attack_target",
              [](ExperimentPlan& p, const std::string& v) {
                  try {
                      p.config.attack_target = immunize::attack_target_from_string(v);
                  } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                  }
              },
              [](const ExperimentPlan& p) { return immunize::to_string(p.config.attack_target); }},
             {"random_start", [](ExperimentPlan& p, const std::string& v) { p.config.random_start = parse_bool(v); },
              [](const ExperimentPlan& p) { return format_bool(p.config.random_start); }},
             tdae_unsigned("tpa_samples", &immunize::TdaeConfig::tpa_samples),
             tdae_number("tpa_radius", &immunize::TdaeConfig::tpa_radius),
         }},
        {"source",
         {
             {"family", [](ExperimentPlan& p, const std::string& v) { p.source.family = v; },
              [](const ExperimentPlan& p) { return p.source.family; }},
             source_unsigned("seed", &models::ModelFamilySpec::seed),
             source_unsigned("channels", &models::ModelFamilySpec::channels),
             source_unsigned("embedding_dim", &models::ModelFamilySpec::embedding_dim),
             source_unsigned("min_depth", &models::ModelFamilySpec::min_depth),
             source_unsigned("max_depth", &models::ModelFamilySpec::max_depth),
             source_unsigned("min_width", &models::ModelFamilySpec::min_width),
             source_unsigned("max_width", &models::ModelFamilySpec::max_width),
             source_unsigned("stem_seed", &models::ModelFamilySpec::stem_seed),
         }},
        {"plan",
         {
             unsigned_field("seed", &ExperimentPlan::seed),
             unsigned_field("seeds", &ExperimentPlan::seeds),
             unsigned_field("images", &ExperimentPlan::images),
             unsigned_field("image_size", &ExperimentPlan::image_size),
             {"methods",
              [](ExperimentPlan& p, const std::string& v) {
                  p.methods.clear();
                  for (const auto& name : split_list(v)) p.methods.push_back(harness::method_from_string(name));
              },
              [](const ExperimentPlan& p) {
                  std::string out;
                  for (Method m : p.methods) out += (out.empty() ? "" : ", ") + harness::to_string(m);
                  return out;
              }},
             {"targets",
              [](ExperimentPlan& p, const std::string& v) {
                  p.targets.clear();
                  for (const auto& item : split_list(v)) p.targets.push_back(parse_target(item));
              },
              [](const ExperimentPlan& p) {
                  std::string out;
                  for (const auto& t : p.targets) out += (out.empty() ? "" : ", ") + format_target(t);
                  return out;
              }},
             number_field("embedding_scale", &ExperimentPlan::embedding_scale),
             {"per_trial_models",
              [](ExperimentPlan& p, const std::string& v) { p.per_trial_models = parse_bool(v); },
              [](const ExperimentPlan& p) { return format_bool(p.per_trial_models); }},
             {"shared_stem", [](ExperimentPlan& p, const std::string& v) { p.shared_stem = parse_bool(v); },
              [](const ExperimentPlan& p) { return format_bool(p.shared_stem); }},
             {"ratios",
              [](ExperimentPlan& p, const std::string& v) {
                  p.ratios.clear();
                  for (const auto& item : split_list(v)) p.ratios.push_back(parse_number(item));
              },
              [](const ExperimentPlan& p) {
                  std::string out;
                  for (double r : p.ratios) out += (out.empty() ? "" : ", ") + format_number(r);
                  return out;
              }},
             number_field("probe_radius", &ExperimentPlan::probe_radius),
             unsigned_field("probe_draws", &ExperimentPlan::probe_draws),
             unsigned_field("efficiency_trials", &ExperimentPlan::efficiency_trials),
         }},
    };
    return s;
}

}  // namespace

double parse_number(const std::string& raw) {
    const std::string text = trim(raw);
    auto one = [&](const std::string& s) {
        double v = 0.0;
        const auto* end = s.data() + s.size();
        const auto [p, ec] = std::from_chars(s.data(), end, v);
        if (s.empty() || ec != std::errc() || p != end || !std::isfinite(v)) {
            throw ConfigError("not a number: '" + raw + "'");
        }
        return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string::npos) return one(text);
    const double den = one(trim(text.substr(slash + 1)));
    if (den == 0.0) throw ConfigError("zero denominator in '" + raw + "'");
    return one(trim(text.substr(0, slash))) / den;
}

std::string format_number(double value) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
    std::string decimal(buf, p);
    const double k = std::round(value * 255.0);
    if (k != 0.0 && std::abs(k) < 1e9 && k / 255.0 == value) {
        std::string fraction = std::to_string(static_cast<long long>(k)) + "/255";
        if (fraction.size() < decimal.size()) return fraction;
    }
    return decimal;
}

ExperimentPlan parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
    }

    ExperimentPlan plan;
    bool have_version = false;
    for (const auto& [name, node] : tree) {
        const auto section = std::find_if(schema().begin(), schema().end(),
                                          [&](const auto& s) { return s.first == name; });
        if (node.empty() && !(section != schema().end() && trim(node.data()).empty())) {
            if (name != "schema_version") throw ConfigError("unknown top-level key '" + name + "'");
            const std::string v = trim(node.data());
            if (v != std::to_string(kSchemaVersion)) {
                throw ConfigError("schema_version: unsupported version '" + v + "' (expected " +
                                  std::to_string(kSchemaVersion) + ")");
            }
            have_version = true;
            continue;
        }
        if (section == schema().end()) throw ConfigError("unknown section [" + name + "]");
        for (const auto& [key, value] : node) {
            const auto field = std::find_if(section->second.begin(), section->second.end(),
                                            [&](const Field& f) { return f.key == key; });
            if (field == section->second.end()) throw ConfigError("unknown key '" + name + "." + key + "'");
            try {
                field->read(plan, trim(value.data()));
            } catch (const ConfigError& e) {
                throw ConfigError(name + "." + key + ": " + e.what());
            }
        }
    }
    if (!have_version) throw ConfigError("missing required key 'schema_version'");
    plan.validate();
    return plan;
}

ExperimentPlan load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io::IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentPlan& plan) {
    std::string out = "schema_version = " + std::to_string(kSchemaVersion) + "\n";
    for (const auto& [section, fields] : schema()) {
        out += "\n[" + section + "]\n";
        for (const auto& f : fields) out += f.key + " = " + f.write(plan) + "\n";
    }
    return out;
}

}  // namespace tdae::config
