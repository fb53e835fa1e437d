#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuniform/control.hpp"
#include "cuniform/dynamics.hpp"
#include "cuniform/levelset.hpp"
#include "cuniform/policy.hpp"
#include "cuniform/world.hpp"

namespace cuniform {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LevelsetParams {
    Resolution res;
    int n_steps = 15;
    double w_psi = 1.0;
    int states_per_cell = 16;  // member states recorded per cell; 0 = centers only
};

struct TrainParams {
    int hidden = 256;
    bool batchnorm = true;
    double bn_momentum = 0.1;
    TrainConfig opt;  // lr, epochs, adam betas, beta_assign, k_neighbors
};

struct SamplerParams {
    int n_actions = 45;
    int horizon = 15;
    double sigma = 0.1;
    double sigma_ln = 0.5;
};

struct ExperimentParams {
    std::vector<int> n_obstacles{10, 15, 20, 25, 30};
    std::vector<double> reveal{1.5, 1.25, 1.0, 0.5};
    int n_envs = 10;
    int trials = 10;
    double extent_x = 35.0;
    double extent_y = 10.0;
    double obstacle_radius = 1.0;
    double min_clearance = 2.5;
    double min_gap = 1.0;  // minimum boundary gap between obstacles
    std::vector<std::string> methods{"mppi", "log-mppi", "cu-mppi", "cu-logmppi"};
};

struct RunConfig {
    VehicleParams vehicle;
    LevelsetParams levelset;
    TrainParams train;
    SamplerParams sampler;
    MppiConfig mppi;
    WorldConfig world;
    ExperimentParams experiment;
    std::string map_path;  // resolved relative to the config file; empty if unset
};

namespace detail {

inline double parse_double(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected a number, got \"" + v + "\"");
    }
}

inline int parse_int(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const int i = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected an integer, got \"" + v + "\"");
    }
}

inline bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where + ": expected a boolean, got \"" + v + "\"");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream iss(v);
    while (std::getline(iss, item, ',')) {
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

}  // namespace detail

inline RunConfig default_run_config() { return RunConfig{}; }

// INI-style config: [section] headers, key = value pairs, '#' or ';' comments.
// Unknown sections or keys are hard errors. Path values resolve relative to
// the config file.
inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto pos = line.find_first_of("#;"); pos != std::string::npos) line.resize(pos);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = line.substr(1, line.size() - 2);
            if (section != "vehicle" && section != "levelset" && section != "train" &&
                section != "sampler" && section != "mppi" && section != "world" &&
                section != "experiment")
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(where + ": key outside of any section");

        auto num = [&] { return detail::parse_double(value, where); };
        auto integer = [&] { return detail::parse_int(value, where); };
        auto boolean = [&] { return detail::parse_bool(value, where); };

        if (section == "vehicle") {
            if (key == "v") cfg.vehicle.v = num();
            else if (key == "wheelbase") cfg.vehicle.wheelbase = num();
            else if (key == "dt") cfg.vehicle.dt = num();
            else if (key == "delta_max_deg") cfg.vehicle.delta_max = deg2rad(num());
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [vehicle]");
        } else if (section == "levelset") {
            if (key == "dx") cfg.levelset.res.dx = num();
            else if (key == "dy") cfg.levelset.res.dy = num();
            else if (key == "dpsi_deg") cfg.levelset.res.dpsi = deg2rad(num());
            else if (key == "n_steps") cfg.levelset.n_steps = integer();
            else if (key == "w_psi") cfg.levelset.w_psi = num();
            else if (key == "states_per_cell") cfg.levelset.states_per_cell = integer();
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [levelset]");
        } else if (section == "train") {
            if (key == "hidden") cfg.train.hidden = integer();
            else if (key == "batchnorm") cfg.train.batchnorm = boolean();
            else if (key == "bn_momentum") cfg.train.bn_momentum = num();
            else if (key == "lr") cfg.train.opt.lr = num();
            else if (key == "epochs") cfg.train.opt.epochs = integer();
            else if (key == "beta1") cfg.train.opt.adam_beta1 = num();
            else if (key == "beta2") cfg.train.opt.adam_beta2 = num();
            else if (key == "eps") cfg.train.opt.adam_eps = num();
            else if (key == "beta_assign") cfg.train.opt.beta_assign = num();
            else if (key == "k_neighbors") cfg.train.opt.k_neighbors = integer();
            else if (key == "member_kernel") cfg.train.opt.member_kernel = boolean();
            else if (key == "weight_decay") cfg.train.opt.weight_decay = num();
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [train]");
        } else if (section == "sampler") {
            if (key == "n_actions") cfg.sampler.n_actions = integer();
            else if (key == "horizon") cfg.sampler.horizon = integer();
            else if (key == "sigma") cfg.sampler.sigma = num();
            else if (key == "sigma_ln") cfg.sampler.sigma_ln = num();
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [sampler]");
        } else if (section == "mppi") {
            if (key == "lambda") cfg.mppi.lambda = num();
            else if (key == "n_samples") cfg.mppi.n_samples = integer();
            else if (key == "horizon") cfg.mppi.horizon = integer();
            else if (key == "kind") {
                if (value == "gaussian") cfg.mppi.kind = SamplerKind::gaussian;
                else if (value == "nln") cfg.mppi.kind = SamplerKind::nln;
                else throw ConfigError(where + ": kind must be gaussian or nln");
            } else if (key == "sigma") cfg.mppi.sigma = num();
            else if (key == "sigma_ln") cfg.mppi.sigma_ln = num();
            else if (key == "gamma") cfg.mppi.gamma = num();
            else if (key == "cu_fraction") cfg.mppi.cu_fraction = num();
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [mppi]");
        } else if (section == "world") {
            if (key == "start_x") cfg.world.start.x = num();
            else if (key == "start_y") cfg.world.start.y = num();
            else if (key == "start_psi_deg") cfg.world.start.psi = deg2rad(num());
            else if (key == "goal_x") cfg.world.goal.x = num();
            else if (key == "goal_y") cfg.world.goal.y = num();
            else if (key == "goal_psi_deg") cfg.world.goal.psi = deg2rad(num());
            else if (key == "goal_radius") cfg.world.goal_radius = num();
            else if (key == "goal_psi_tol_deg") cfg.world.goal_psi_tol = deg2rad(num());
            else if (key == "heading_aware") cfg.world.heading_aware = boolean();
            else if (key == "weight_x") cfg.world.weight_x = num();
            else if (key == "weight_y") cfg.world.weight_y = num();
            else if (key == "weight_heading") cfg.world.weight_heading = num();
            else if (key == "lambda_phi") cfg.world.lambda_phi = num();
            else if (key == "detection_half_extent") cfg.world.detection_half_extent = num();
            else if (key == "reveal_distance") cfg.world.reveal_distance = num();
            else if (key == "c_collision") cfg.world.c_collision = num();
            else if (key == "lambda_obs") cfg.world.lambda_obs = num();
            else if (key == "lambda_goal") cfg.world.lambda_goal = num();
            else if (key == "footprint_radius") cfg.world.footprint_radius = num();
            else if (key == "noise_xy") cfg.world.noise_xy = num();
            else if (key == "noise_psi") cfg.world.noise_psi = num();
            else if (key == "step_budget") cfg.world.step_budget = integer();
            else if (key == "costmap_resolution") cfg.world.costmap_resolution = num();
            else if (key == "map") cfg.map_path = (base / value).lexically_normal().string();
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [world]");
        } else if (section == "experiment") {
            if (key == "n_obstacles") {
                cfg.experiment.n_obstacles.clear();
                for (const auto& item : detail::split_list(value))
                    cfg.experiment.n_obstacles.push_back(detail::parse_int(item, where));
            } else if (key == "reveal") {
                cfg.experiment.reveal.clear();
                for (const auto& item : detail::split_list(value))
                    cfg.experiment.reveal.push_back(detail::parse_double(item, where));
            } else if (key == "n_envs") cfg.experiment.n_envs = integer();
            else if (key == "trials") cfg.experiment.trials = integer();
            else if (key == "extent_x") cfg.experiment.extent_x = num();
            else if (key == "extent_y") cfg.experiment.extent_y = num();
            else if (key == "obstacle_radius") cfg.experiment.obstacle_radius = num();
            else if (key == "min_clearance") cfg.experiment.min_clearance = num();
            else if (key == "min_gap") cfg.experiment.min_gap = num();
            else if (key == "methods") cfg.experiment.methods = detail::split_list(value);
            else throw ConfigError(where + ": unknown key \"" + key + "\" in [experiment]");
        }
    }
    return cfg;
}

namespace detail {

inline std::string json_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// Flat JSON dump of every resolved value, for run provenance. Key order is
// fixed so identical configs serialize to identical bytes.
inline std::string resolved_config_json(const RunConfig& c) {
    std::ostringstream os;
    auto num = detail::json_num;
    os << "{\n";
    os << "  \"vehicle\": {\"v\": " << num(c.vehicle.v) << ", \"wheelbase\": "
       << num(c.vehicle.wheelbase) << ", \"dt\": " << num(c.vehicle.dt)
       << ", \"delta_max\": " << num(c.vehicle.delta_max) << "},\n";
    os << "  \"levelset\": {\"dx\": " << num(c.levelset.res.dx) << ", \"dy\": "
       << num(c.levelset.res.dy) << ", \"dpsi\": " << num(c.levelset.res.dpsi)
       << ", \"n_steps\": " << c.levelset.n_steps << ", \"w_psi\": " << num(c.levelset.w_psi)
       << ", \"states_per_cell\": " << c.levelset.states_per_cell << "},\n";
    os << "  \"train\": {\"hidden\": " << c.train.hidden << ", \"batchnorm\": "
       << (c.train.batchnorm ? "true" : "false") << ", \"bn_momentum\": "
       << num(c.train.bn_momentum) << ", \"lr\": " << num(c.train.opt.lr) << ", \"epochs\": "
       << c.train.opt.epochs << ", \"beta1\": " << num(c.train.opt.adam_beta1)
       << ", \"beta2\": " << num(c.train.opt.adam_beta2) << ", \"eps\": "
       << num(c.train.opt.adam_eps) << ", \"beta_assign\": " << num(c.train.opt.beta_assign)
       << ", \"k_neighbors\": " << c.train.opt.k_neighbors << ", \"member_kernel\": "
       << (c.train.opt.member_kernel ? "true" : "false") << ", \"weight_decay\": "
       << num(c.train.opt.weight_decay) << "},\n";
    os << "  \"sampler\": {\"n_actions\": " << c.sampler.n_actions << ", \"horizon\": "
       << c.sampler.horizon << ", \"sigma\": " << num(c.sampler.sigma) << ", \"sigma_ln\": "
       << num(c.sampler.sigma_ln) << "},\n";
    os << "  \"mppi\": {\"lambda\": " << num(c.mppi.lambda) << ", \"n_samples\": "
       << c.mppi.n_samples << ", \"horizon\": " << c.mppi.horizon << ", \"kind\": \""
       << (c.mppi.kind == SamplerKind::gaussian ? "gaussian" : "nln") << "\", \"sigma\": "
       << num(c.mppi.sigma) << ", \"sigma_ln\": " << num(c.mppi.sigma_ln) << ", \"gamma\": "
       << num(c.mppi.gamma) << ", \"cu_fraction\": " << num(c.mppi.cu_fraction) << "},\n";
    os << "  \"world\": {\"start\": [" << num(c.world.start.x) << ", " << num(c.world.start.y)
       << ", " << num(c.world.start.psi) << "], \"goal\": [" << num(c.world.goal.x) << ", "
       << num(c.world.goal.y) << ", " << num(c.world.goal.psi) << "], \"goal_radius\": "
       << num(c.world.goal_radius) << ", \"goal_psi_tol\": " << num(c.world.goal_psi_tol)
       << ", \"heading_aware\": " << (c.world.heading_aware ? "true" : "false")
       << ", \"weight_x\": " << num(c.world.weight_x) << ", \"weight_y\": "
       << num(c.world.weight_y) << ", \"weight_heading\": " << num(c.world.weight_heading)
       << ", \"lambda_phi\": " << num(c.world.lambda_phi) << ", \"detection_half_extent\": "
       << num(c.world.detection_half_extent) << ", \"reveal_distance\": "
       << num(c.world.reveal_distance) << ", \"c_collision\": " << num(c.world.c_collision)
       << ", \"lambda_obs\": " << num(c.world.lambda_obs) << ", \"lambda_goal\": "
       << num(c.world.lambda_goal) << ", \"footprint_radius\": "
       << num(c.world.footprint_radius) << ", \"noise_xy\": " << num(c.world.noise_xy)
       << ", \"noise_psi\": " << num(c.world.noise_psi) << ", \"step_budget\": "
       << c.world.step_budget << ", \"costmap_resolution\": " << num(c.world.costmap_resolution)
       << ", \"map\": \"" << c.map_path << "\"},\n";
    os << "  \"experiment\": {\"n_obstacles\": [";
    for (std::size_t i = 0; i < c.experiment.n_obstacles.size(); ++i)
        os << (i ? ", " : "") << c.experiment.n_obstacles[i];
    os << "], \"reveal\": [";
    for (std::size_t i = 0; i < c.experiment.reveal.size(); ++i)
        os << (i ? ", " : "") << num(c.experiment.reveal[i]);
    os << "], \"n_envs\": " << c.experiment.n_envs << ", \"trials\": " << c.experiment.trials
       << ", \"extent_x\": " << num(c.experiment.extent_x) << ", \"extent_y\": "
       << num(c.experiment.extent_y) << ", \"obstacle_radius\": "
       << num(c.experiment.obstacle_radius) << ", \"min_clearance\": "
       << num(c.experiment.min_clearance) << ", \"min_gap\": " << num(c.experiment.min_gap)
       << ", \"methods\": [";
    for (std::size_t i = 0; i < c.experiment.methods.size(); ++i)
        os << (i ? ", " : "") << '"' << c.experiment.methods[i] << '"';
    os << "]}\n";
    os << "}\n";
    return os.str();
}

}  // namespace cuniform
