#include <fstream>
#include <set>
#include <stdexcept>

#include "entpick/heap_sim.hpp"

namespace entpick {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid simulator config: " + what);
}

}  // namespace

void validate(const SimConfig& c) {
    require(c.tray.width_mm > 0 && c.tray.depth_mm > 0 && c.tray.height_mm > 0, "tray_mm must be positive");
    require(c.fill_mm >= 0 && c.fill_mm <= c.tray.height_mm, "fill_mm must lie in [0, tray height]");
    require(c.noise.amplitude_mm >= 0 && c.noise.roughness_mm >= 0, "noise amplitudes must be >= 0");
    require(c.noise.feature_mm > 0 && c.noise.roughness_feature_mm > 0 && c.noise.field_feature_mm > 0,
            "noise feature sizes must be positive");
    require(c.lambda_range[0] >= 0 && c.lambda_range[1] <= 1 && c.lambda_range[0] <= c.lambda_range[1],
            "lambda_range must be an ordered sub-range of [0, 1]");
    require(c.lambda_surface_coupling >= 0 && c.lambda_surface_coupling <= 1,
            "lambda_surface_coupling must lie in [0, 1]");
    require(c.rho_range[0] > 0 && c.rho_range[0] <= c.rho_range[1], "rho_range must be positive and ordered");
    require(c.footprint_mm[0] > 0 && c.footprint_mm[1] > 0, "footprint_mm must be positive");
    require(c.footprint_mm[0] <= c.tray.width_mm && c.footprint_mm[1] <= c.tray.depth_mm,
            "footprint_mm must fit in the tray");
    require(c.eta_fill > 0 && c.eta_fill <= 1, "eta_fill must lie in (0, 1]");
    require(c.kappa >= 0, "kappa must be >= 0");
    require(c.clump_lognormal.sigma >= 0, "clump_lognormal sigma must be >= 0");
    require(c.clump_reach_mm >= 0, "clump_reach_mm must be >= 0");
    require(c.pregrasp.beta >= 0 && c.pregrasp.beta <= 1, "pregrasp.beta must lie in [0, 1]");
    require(c.pregrasp.fluff >= 1, "pregrasp.f must be >= 1");
    require(c.pregrasp.radius_mm > 0, "pregrasp.r_mm must be positive");
    require(c.postgrasp.gamma_shape > 0 && c.postgrasp.gamma_scale >= 0, "postgrasp gamma parameters invalid");
    require(c.postgrasp.p_clump >= 0 && c.postgrasp.p_clump <= 1, "postgrasp.p_clump must lie in [0, 1]");
    require(c.postgrasp.hang_drop_prob >= 0 && c.postgrasp.hang_drop_prob <= 1,
            "postgrasp.hang_drop_prob must lie in [0, 1]");
    require(c.postgrasp.speed.v_min > 0 && c.postgrasp.speed.v_min <= c.postgrasp.speed.v_max,
            "postgrasp speeds need 0 < v_min <= v_max");
    require(c.scale.resolution_g > 0 && c.scale.rate_hz > 0 && c.scale.control_hz > 0,
            "scale rates and resolution must be positive");
    require(c.scale.lag >= 0 && c.scale.transient_gain >= 0, "scale lag and transient_gain must be >= 0");
    require(c.relax.sigma_mm >= 0, "relax.sigma_mm must be >= 0");
    require(c.relax.global_share >= 0 && c.relax.global_share <= 1, "relax.global_share must lie in [0, 1]");
    require(c.relax.recovery >= 0 && c.relax.recovery <= 1, "relax.recovery must lie in [0, 1]");
}

SimConfig sim_config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("simulator config must be a JSON object");
    reject_unknown(j,
                   {"tray_mm", "fill_mm", "noise", "lambda_range", "lambda_surface_coupling", "rho_range", "footprint_mm", "eta_fill", "kappa",
                    "clump_lognormal", "clump_reach_mm", "pregrasp", "postgrasp", "scale", "relax"},
                   "simulator config");
    SimConfig c;
    if (j.contains("tray_mm")) {
        const auto t = j.at("tray_mm").get<std::array<double, 3>>();
        c.tray = {t[0], t[1], t[2]};
    }
    read_opt(j, "fill_mm", c.fill_mm);
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        if (n.is_number()) {
            c.noise.amplitude_mm = n.get<double>();
        } else {
            reject_unknown(n, {"amplitude_mm", "feature_mm", "roughness_mm", "roughness_feature_mm", "field_feature_mm"},
                           "noise");
            read_opt(n, "amplitude_mm", c.noise.amplitude_mm);
            read_opt(n, "feature_mm", c.noise.feature_mm);
            read_opt(n, "roughness_mm", c.noise.roughness_mm);
            read_opt(n, "roughness_feature_mm", c.noise.roughness_feature_mm);
            read_opt(n, "field_feature_mm", c.noise.field_feature_mm);
        }
    }
    read_opt(j, "lambda_range", c.lambda_range);
    read_opt(j, "lambda_surface_coupling", c.lambda_surface_coupling);
    read_opt(j, "rho_range", c.rho_range);
    read_opt(j, "footprint_mm", c.footprint_mm);
    read_opt(j, "eta_fill", c.eta_fill);
    read_opt(j, "kappa", c.kappa);
    if (j.contains("clump_lognormal")) {
        const auto& cl = j.at("clump_lognormal");
        if (cl.is_array()) {
            const auto v = cl.get<std::array<double, 2>>();
            c.clump_lognormal = {v[0], v[1]};
        } else {
            reject_unknown(cl, {"mu", "sigma"}, "clump_lognormal");
            read_opt(cl, "mu", c.clump_lognormal.mu);
            read_opt(cl, "sigma", c.clump_lognormal.sigma);
        }
    }
    read_opt(j, "clump_reach_mm", c.clump_reach_mm);
    if (j.contains("pregrasp")) {
        const auto& p = j.at("pregrasp");
        reject_unknown(p, {"beta", "f", "r_mm"}, "pregrasp");
        read_opt(p, "beta", c.pregrasp.beta);
        read_opt(p, "f", c.pregrasp.fluff);
        read_opt(p, "r_mm", c.pregrasp.radius_mm);
    }
    if (j.contains("postgrasp")) {
        const auto& p = j.at("postgrasp");
        reject_unknown(p, {"gamma_shape", "gamma_scale", "p_clump", "hang_drop_prob", "v_min", "v_max"}, "postgrasp");
        read_opt(p, "gamma_shape", c.postgrasp.gamma_shape);
        read_opt(p, "gamma_scale", c.postgrasp.gamma_scale);
        read_opt(p, "p_clump", c.postgrasp.p_clump);
        read_opt(p, "hang_drop_prob", c.postgrasp.hang_drop_prob);
        read_opt(p, "v_min", c.postgrasp.speed.v_min);
        read_opt(p, "v_max", c.postgrasp.speed.v_max);
    }
    if (j.contains("scale")) {
        const auto& s = j.at("scale");
        reject_unknown(s, {"resolution_g", "rate_hz", "lag", "transient_gain", "control_hz"}, "scale");
        read_opt(s, "resolution_g", c.scale.resolution_g);
        read_opt(s, "rate_hz", c.scale.rate_hz);
        read_opt(s, "lag", c.scale.lag);
        read_opt(s, "transient_gain", c.scale.transient_gain);
        read_opt(s, "control_hz", c.scale.control_hz);
    }
    if (j.contains("relax")) {
        const auto& r = j.at("relax");
        reject_unknown(r, {"sigma_mm", "global_share", "recovery"}, "relax");
        read_opt(r, "sigma_mm", c.relax.sigma_mm);
        read_opt(r, "global_share", c.relax.global_share);
        read_opt(r, "recovery", c.relax.recovery);
    }
    validate(c);
    return c;
}

json to_json(const SimConfig& c) {
    return json{
        {"tray_mm", {c.tray.width_mm, c.tray.depth_mm, c.tray.height_mm}},
        {"fill_mm", c.fill_mm},
        {"noise",
         {{"amplitude_mm", c.noise.amplitude_mm},
          {"feature_mm", c.noise.feature_mm},
          {"roughness_mm", c.noise.roughness_mm},
          {"roughness_feature_mm", c.noise.roughness_feature_mm},
          {"field_feature_mm", c.noise.field_feature_mm}}},
        {"lambda_range", c.lambda_range},
        {"lambda_surface_coupling", c.lambda_surface_coupling},
        {"rho_range", c.rho_range},
        {"footprint_mm", c.footprint_mm},
        {"eta_fill", c.eta_fill},
        {"kappa", c.kappa},
        {"clump_lognormal", {{"mu", c.clump_lognormal.mu}, {"sigma", c.clump_lognormal.sigma}}},
        {"clump_reach_mm", c.clump_reach_mm},
        {"pregrasp", {{"beta", c.pregrasp.beta}, {"f", c.pregrasp.fluff}, {"r_mm", c.pregrasp.radius_mm}}},
        {"postgrasp",
         {{"gamma_shape", c.postgrasp.gamma_shape},
          {"gamma_scale", c.postgrasp.gamma_scale},
          {"p_clump", c.postgrasp.p_clump},
          {"hang_drop_prob", c.postgrasp.hang_drop_prob},
          {"v_min", c.postgrasp.speed.v_min},
          {"v_max", c.postgrasp.speed.v_max}}},
        {"scale",
         {{"resolution_g", c.scale.resolution_g},
          {"rate_hz", c.scale.rate_hz},
          {"lag", c.scale.lag},
          {"transient_gain", c.scale.transient_gain},
          {"control_hz", c.scale.control_hz}}},
        {"relax",
         {{"sigma_mm", c.relax.sigma_mm}, {"global_share", c.relax.global_share}, {"recovery", c.relax.recovery}}},
    };
}

SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open simulator config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("simulator config '" + path + "' is not valid JSON: " + e.what());
    }
    return sim_config_from_json(j);
}

}  // namespace entpick
