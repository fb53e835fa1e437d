// Command-line frontend: level-set construction, policy training, trajectory
// sampling, uniformity/coverage analysis, single-episode simulation and the
// benchmark suites. Every command is deterministic given (--config, --seed);
// output files never contain timestamps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cuniform/config.hpp"
#include "cuniform/control.hpp"
#include "cuniform/dynamics.hpp"
#include "cuniform/harness.hpp"
#include "cuniform/levelset.hpp"
#include "cuniform/metrics.hpp"
#include "cuniform/policy.hpp"
#include "cuniform/render.hpp"
#include "cuniform/rng.hpp"
#include "cuniform/sampling.hpp"
#include "cuniform/world.hpp"

namespace fs = std::filesystem;
using namespace cuniform;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
};

RunConfig load_config_or_default(const CommonArgs& args) {
    if (args.config_path.empty()) return default_run_config();
    return load_run_config(args.config_path);
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
}

fs::path prepare_out_dir(const CommonArgs& args, const RunConfig& cfg) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "resolved_config.json", resolved_config_json(cfg));
    return args.out_dir;
}

ActionSet make_actions(const RunConfig& cfg) {
    return ActionSet::uniform_spread(cfg.sampler.n_actions, cfg.vehicle.delta_max);
}

PolicyNetwork load_policy_checked(const std::string& path, const RunConfig& cfg) {
    if (path.empty()) throw ConfigError("this command needs --model");
    PolicyNetwork net = load_policy(path);
    if (net.config().n_actions != cfg.sampler.n_actions)
        throw ConfigError("model has " + std::to_string(net.config().n_actions) +
                          " actions but the config requests " +
                          std::to_string(cfg.sampler.n_actions));
    return net;
}

Color method_color(Method m) {
    switch (m) {
        case Method::mppi: return palette::mppi;
        case Method::log_mppi: return palette::log_mppi;
        case Method::cu_mppi: return palette::cu_mppi;
        case Method::cu_logmppi: return palette::cu_logmppi;
    }
    return palette::black;
}

void write_trajectories_csv(const fs::path& path, const TrajectoryBatch& batch) {
    std::string csv = "traj_id,t,x,y,psi,delta\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        const auto& seq = batch.sequences[i];
        for (std::size_t t = 0; t < traj.size(); ++t) {
            csv += std::to_string(i) + ',' + std::to_string(t) + ',' + fmt(traj[t].x) + ',' +
                   fmt(traj[t].y) + ',' + fmt(traj[t].psi) + ',';
            if (t < seq.size()) csv += fmt(seq[t].delta);
            csv += '\n';
        }
    }
    write_text(path, csv);
}

struct Bounds {
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
    void include(double x, double y) {
        x0 = std::min(x0, x); x1 = std::max(x1, x);
        y0 = std::min(y0, y); y1 = std::max(y1, y);
    }
    void pad(double m) { x0 -= m; y0 -= m; x1 += m; y1 += m; }
};

void render_fan(const fs::path& dir, const TrajectoryBatch& batch, Color color) {
    Bounds b;
    for (const auto& traj : batch.trajectories)
        for (const auto& s : traj) b.include(s.x, s.y);
    b.pad(0.3);
    Canvas canvas(b.x0, b.y0, b.x1, b.y1, 800);
    SvgWriter svg(b.x0, b.y0, b.x1, b.y1, 800);
    for (const auto& traj : batch.trajectories) {
        canvas.draw_polyline(traj, color);
        svg.polyline(traj, color, 0.6);
    }
    save_ppm(canvas.image(), dir / "fan.ppm");
    svg.save((dir / "fan.svg").string());
}

void render_episode(const fs::path& dir, const World& world, const SimState& final_sim,
                    const Trajectory& executed, Color color) {
    Bounds b;
    for (const auto& s : executed) b.include(s.x, s.y);
    b.include(world.cfg.goal.x, world.cfg.goal.y);
    if (!world.grid.empty()) {
        b.include(world.grid.origin_x, world.grid.origin_y);
        b.include(world.grid.origin_x + world.grid.width * world.grid.resolution,
                  world.grid.origin_y + world.grid.height * world.grid.resolution);
    }
    for (const auto& o : world.obstacles) {
        b.include(o.cx - o.radius, o.cy - o.radius);
        b.include(o.cx + o.radius, o.cy + o.radius);
    }
    b.pad(0.5);
    Canvas canvas(b.x0, b.y0, b.x1, b.y1, 900);
    SvgWriter svg(b.x0, b.y0, b.x1, b.y1, 900);
    if (!world.grid.empty()) canvas.draw_grid(world.grid, palette::black);
    for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
        const auto& o = world.obstacles[i];
        const bool seen = i < final_sim.revealed.size() && final_sim.revealed[i];
        canvas.draw_circle(o.cx, o.cy, o.radius, seen ? palette::black : palette::gray, seen);
        svg.circle(o.cx, o.cy, o.radius, seen ? palette::black : palette::gray, seen);
    }
    canvas.draw_circle(world.cfg.goal.x, world.cfg.goal.y, world.cfg.goal_radius, palette::goal,
                       false);
    svg.circle(world.cfg.goal.x, world.cfg.goal.y, world.cfg.goal_radius, palette::goal, false);
    canvas.draw_polyline(executed, color);
    svg.polyline(executed, color, 1.2);
    save_ppm(canvas.image(), dir / "episode.ppm");
    svg.save((dir / "episode.svg").string());
}

// ---------------------------------------------------------------------------

void cmd_build_levelsets(const CommonArgs& args) {
    const RunConfig cfg = load_config_or_default(args);
    const fs::path dir = prepare_out_dir(args, cfg);
    const ActionSet actions = make_actions(cfg);
    const LevelSetStack stack = build_level_sets(State{}, actions.deltas, cfg.vehicle,
                                                 cfg.levelset.res, cfg.levelset.n_steps,
                                                 cfg.levelset.w_psi, cfg.levelset.states_per_cell);
    save_level_sets(stack, (dir / "levelsets.culs").string());
    std::size_t cells = 0;
    for (const auto& l : stack.levels) cells += l.size();
    std::cout << "levelsets: " << stack.levels.size() << " levels, " << cells << " cells -> "
              << (dir / "levelsets.culs").string() << "\n";
}

void cmd_train(const CommonArgs& args, const std::string& levelsets_path) {
    const RunConfig cfg = load_config_or_default(args);
    const fs::path dir = prepare_out_dir(args, cfg);
    if (levelsets_path.empty()) throw ConfigError("train needs --levelsets");
    const LevelSetStack stack = load_level_sets(levelsets_path);
    const ActionSet actions = make_actions(cfg);

    PolicyConfig pc;
    pc.hidden = cfg.train.hidden;
    pc.n_actions = cfg.sampler.n_actions;
    pc.batchnorm = cfg.train.batchnorm;
    pc.bn_momentum = cfg.train.bn_momentum;
    PolicyNetwork net(pc, args.seed);

    TrainConfig opt = cfg.train.opt;
    opt.seed = args.seed;
    const std::vector<LossRecord> trace = train(net, stack, actions, cfg.vehicle, opt);

    save_policy(net, (dir / "model.cunn").string());
    std::string csv = "epoch,level_t,loss\n";
    for (const auto& rec : trace)
        csv += std::to_string(rec.epoch) + ',' + std::to_string(rec.level) + ',' + fmt(rec.loss) +
               '\n';
    write_text(dir / "loss_trace.csv", csv);
    std::cout << "trained " << opt.epochs << " epochs over " << stack.steps()
              << " transitions -> " << (dir / "model.cunn").string() << "\n";
}

void cmd_sample(const CommonArgs& args, const std::string& model_path, const std::string& method,
                int n_traj, double sigma_override) {
    RunConfig cfg = load_config_or_default(args);
    if (sigma_override > 0.0) cfg.sampler.sigma = sigma_override;
    const fs::path dir = prepare_out_dir(args, cfg);
    const ActionSet actions = make_actions(cfg);
    Rng rng(args.seed);
    const State s0 = cfg.world.start;
    const ControlSequence zeros(static_cast<std::size_t>(cfg.sampler.horizon));

    TrajectoryBatch batch;
    Color color = palette::cu_mppi;
    if (method == "cuniform") {
        const PolicyNetwork net = load_policy_checked(model_path, cfg);
        batch = sample_cuniform(net, actions, s0, cfg.sampler.horizon, n_traj, cfg.vehicle, rng);
    } else if (method == "gaussian") {
        batch = sample_gaussian(zeros, GaussianSamplerConfig{cfg.sampler.sigma, cfg.sampler.horizon},
                                n_traj, s0, cfg.vehicle, rng);
        color = palette::mppi;
    } else if (method == "nln") {
        batch = sample_nln(zeros,
                           NlnSamplerConfig{cfg.sampler.sigma, cfg.sampler.sigma_ln,
                                            cfg.sampler.horizon},
                           n_traj, s0, cfg.vehicle, rng);
        color = palette::log_mppi;
    } else {
        throw ConfigError("sample: --method must be cuniform, gaussian or nln");
    }

    write_trajectories_csv(dir / "trajectories.csv", batch);
    render_fan(dir, batch, color);
    std::cout << "sampled " << batch.size() << " trajectories (" << method << ") -> "
              << (dir / "trajectories.csv").string() << "\n";
}

void cmd_analyze(const CommonArgs& args, const std::string& model_path,
                 const std::string& levelsets_path, int n_traj) {
    const RunConfig cfg = load_config_or_default(args);
    const fs::path dir = prepare_out_dir(args, cfg);
    if (levelsets_path.empty()) throw ConfigError("analyze needs --levelsets");
    const LevelSetStack stack = load_level_sets(levelsets_path);
    const PolicyNetwork net = load_policy_checked(model_path, cfg);
    const ActionSet actions = make_actions(cfg);
    Rng rng(args.seed);

    const TrajectoryBatch batch =
        sample_cuniform(net, actions, stack.root, stack.steps(), n_traj, cfg.vehicle, rng);
    const UniformityReport uni = uniformity_percent(stack, batch.trajectories);
    const CoverageReport cov = coverage_percent(stack, batch.trajectories);

    std::string ucsv = "level,n_cells,ratio\n";
    for (std::size_t t = 0; t < uni.ratios.size(); ++t)
        ucsv += std::to_string(t) + ',' + std::to_string(stack.levels[t].size()) + ',' +
                fmt(uni.ratios[t]) + '\n';
    write_text(dir / "uniformity.csv", ucsv);

    std::string ccsv = "visited,total,percent,visited_xy,total_xy,percent_xy\n";
    ccsv += std::to_string(cov.visited) + ',' + std::to_string(cov.total) + ',' +
            fmt(cov.percent) + ',' + std::to_string(cov.visited_xy) + ',' +
            std::to_string(cov.total_xy) + ',' + fmt(cov.percent_xy) + '\n';
    write_text(dir / "coverage.csv", ccsv);

    double min_ratio = 1.0;
    for (double r : uni.ratios) min_ratio = std::min(min_ratio, r);
    std::string summary;
    summary += "samples: " + std::to_string(uni.sample_count) + "\n";
    summary += "levels: " + std::to_string(stack.levels.size()) + "\n";
    summary += "min_uniformity_ratio: " + fmt(min_ratio) + "\n";
    summary += "coverage_percent: " + fmt(cov.percent) + "\n";
    summary += "coverage_percent_xy: " + fmt(cov.percent_xy) + "\n";
    write_text(dir / "summary.txt", summary);
    std::cout << "analyze: min uniformity " << fmt(min_ratio) << ", coverage " << fmt(cov.percent)
              << "% -> " << (dir / "summary.txt").string() << "\n";
}

void write_episode_csv(const fs::path& path, const EpisodeResult& result) {
    std::string csv = "step,x_true,y_true,psi_true,x_bel,y_bel,psi_bel,delta_cmd,outcome\n";
    for (const auto& row : result.log)
        csv += std::to_string(row.step) + ',' + fmt(row.true_state.x) + ',' +
               fmt(row.true_state.y) + ',' + fmt(row.true_state.psi) + ',' +
               fmt(row.believed_state.x) + ',' + fmt(row.believed_state.y) + ',' +
               fmt(row.believed_state.psi) + ',' + fmt(row.delta_cmd) + ',' +
               outcome_name(row.outcome) + '\n';
    write_text(path, csv);
}

void cmd_simulate(const CommonArgs& args, const std::string& model_path,
                  const std::string& map_path, const std::string& method_str,
                  double sigma_override, int n_traj_override) {
    RunConfig cfg = load_config_or_default(args);
    if (sigma_override > 0.0) cfg.mppi.sigma = sigma_override;
    if (n_traj_override > 0) cfg.mppi.n_samples = n_traj_override;
    const fs::path dir = prepare_out_dir(args, cfg);

    Method method;
    try {
        method = method_from_string(method_str);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    World world;
    world.cfg = cfg.world;
    const std::string grid_path = !map_path.empty() ? map_path : cfg.map_path;
    if (!grid_path.empty()) world.grid = load_grid(grid_path);

    PolicyNetwork net;
    ActionSet actions = make_actions(cfg);
    if (method_uses_policy(method)) net = load_policy_checked(model_path, cfg);

    const EpisodeResult result = run_episode(world, method, cfg.vehicle, cfg.mppi,
                                             method_uses_policy(method) ? &net : nullptr,
                                             method_uses_policy(method) ? &actions : nullptr,
                                             args.seed, true);

    write_episode_csv(dir / "episode.csv", result);
    SimState final_sim = make_sim(world);
    if (!result.log.empty()) {
        final_sim.revealed.assign(world.obstacles.size(), 1);  // render what an episode could reveal
        final_sim.true_state = result.log.back().true_state;
    }
    render_episode(dir, world, final_sim, result.executed, method_color(method));
    std::cout << "simulate: " << method_name(method) << " -> " << outcome_name(result.outcome)
              << " in " << result.steps << " steps, path length " << fmt(result.path_length)
              << "\n";
}

void cmd_benchmark(const CommonArgs& args, const std::string& model_path,
                   const std::string& suite) {
    const RunConfig cfg = load_config_or_default(args);
    const fs::path dir = prepare_out_dir(args, cfg);

    std::vector<Method> methods;
    for (const auto& name : cfg.experiment.methods) {
        try {
            methods.push_back(method_from_string(name));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("benchmark: ") + e.what());
        }
    }
    const bool needs_net = std::any_of(methods.begin(), methods.end(), method_uses_policy);
    PolicyNetwork net;
    ActionSet actions = make_actions(cfg);
    if (needs_net) net = load_policy_checked(model_path, cfg);

    std::string csv = "method,sigma,n_traj,env_id,reveal_dist,outcome,path_length\n";
    auto emit = [&](Method m, const std::string& env_id, double reveal,
                    const EpisodeResult& r) {
        csv += std::string(method_name(m)) + ',' + fmt(cfg.mppi.sigma) + ',' +
               std::to_string(cfg.mppi.n_samples) + ',' + env_id + ',' + fmt(reveal) + ',' +
               outcome_name(r.outcome) + ',' + fmt(r.path_length) + '\n';
    };

    if (suite == "dynamic") {
        for (int n_obs : cfg.experiment.n_obstacles) {
            for (double reveal : cfg.experiment.reveal) {
                for (int env = 0; env < cfg.experiment.n_envs; ++env) {
                    WorldConfig wc = cfg.world;
                    wc.reveal_distance = reveal;
                    wc.start = State{1.5, cfg.experiment.extent_y / 2.0, 0.0};
                    wc.goal = State{cfg.experiment.extent_x - 1.5, cfg.experiment.extent_y / 2.0, 0.0};
                    const World world = generate_cluttered_world(
                        n_obs, cfg.experiment.extent_x, cfg.experiment.extent_y,
                        cfg.experiment.min_clearance,
                        mix_seed(mix_seed(args.seed, static_cast<std::uint64_t>(n_obs)),
                                 static_cast<std::uint64_t>(env)),
                        wc, cfg.experiment.obstacle_radius, cfg.experiment.min_gap);
                    const std::string env_id =
                        "obs" + std::to_string(n_obs) + "-env" + std::to_string(env);
                    for (Method m : methods) {
                        for (int trial = 0; trial < cfg.experiment.trials; ++trial) {
                            const std::uint64_t ep_seed = mix_seed(
                                mix_seed(args.seed, static_cast<std::uint64_t>(env)),
                                static_cast<std::uint64_t>(trial));
                            const EpisodeResult r = run_episode(
                                world, m, cfg.vehicle, cfg.mppi,
                                method_uses_policy(m) ? &net : nullptr,
                                method_uses_policy(m) ? &actions : nullptr, ep_seed);
                            emit(m, env_id, reveal, r);
                        }
                    }
                }
            }
        }
    } else if (suite == "c2c") {
        // configuration-to-configuration tasks in open space; task 0 returns
        // to the start, the rest require a full turn
        const std::vector<State> goals{State{0.0, 0.0, 0.0}, State{-2.0, 0.0, kPi},
                                       State{0.0, 0.0, kPi}, State{2.0, 0.0, kPi}};
        for (std::size_t task = 0; task < goals.size(); ++task) {
            World world;
            world.cfg = cfg.world;
            world.cfg.start = State{0.0, 0.0, 0.0};
            world.cfg.goal = goals[task];
            world.cfg.heading_aware = true;
            world.cfg.weight_x = 1.5;
            world.cfg.weight_y = 1.5;
            world.cfg.weight_heading = 1.0;
            world.cfg.lambda_phi = 20.0;
            world.cfg.lambda_obs = 0.0;
            world.cfg.step_budget = std::min(world.cfg.step_budget, 75);
            MppiConfig mc = cfg.mppi;
            mc.horizon = 22;  // 4.5 s at dt = 0.2
            const std::string env_id = "task" + std::to_string(task);
            for (Method m : methods) {
                for (int trial = 0; trial < cfg.experiment.trials; ++trial) {
                    const std::uint64_t ep_seed =
                        mix_seed(mix_seed(args.seed, static_cast<std::uint64_t>(task)),
                                 static_cast<std::uint64_t>(trial));
                    const EpisodeResult r = run_episode(
                        world, m, cfg.vehicle, mc, method_uses_policy(m) ? &net : nullptr,
                        method_uses_policy(m) ? &actions : nullptr, ep_seed);
                    emit(m, env_id, 0.0, r);
                }
            }
        }
    } else {
        throw ConfigError("benchmark: --suite must be dynamic or c2c");
    }

    write_text(dir / "results.csv", csv);
    std::cout << "benchmark (" << suite << ") -> " << (dir / "results.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"C-Uniform trajectory sampling and CU-MPPI control toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string model_path, map_path, levelsets_path, suite = "dynamic";
    std::string sample_method = "cuniform", sim_method = "cu-mppi";
    int sample_n = 1000, analyze_n = 10000, sim_n = 0;
    double sample_sigma = 0.0, sim_sigma = 0.0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "INI config file");
        cmd->add_option("--seed", args.seed, "master random seed");
        cmd->add_option("--out-dir", args.out_dir, "output directory");
    };

    CLI::App* build = app.add_subcommand("build-levelsets", "construct reachable level sets");
    add_common(build);

    CLI::App* train_cmd = app.add_subcommand("train", "train the action policy");
    add_common(train_cmd);
    train_cmd->add_option("--levelsets", levelsets_path, "level-set stack file");

    CLI::App* sample = app.add_subcommand("sample", "sample trajectories and render the fan");
    add_common(sample);
    sample->add_option("--model", model_path, "policy model file");
    sample->add_option("--method", sample_method, "cuniform | gaussian | nln");
    sample->add_option("--n-traj", sample_n, "number of trajectories");
    sample->add_option("--sigma", sample_sigma, "override sampler sigma");

    CLI::App* analyze = app.add_subcommand("analyze", "uniformity and coverage reports");
    add_common(analyze);
    analyze->add_option("--model", model_path, "policy model file");
    analyze->add_option("--levelsets", levelsets_path, "level-set stack file");
    analyze->add_option("--n-traj", analyze_n, "number of trajectories");

    CLI::App* simulate = app.add_subcommand("simulate", "run one navigation episode");
    add_common(simulate);
    simulate->add_option("--model", model_path, "policy model file");
    simulate->add_option("--map", map_path, "occupancy grid file");
    simulate->add_option("--method", sim_method, "mppi | log-mppi | cu-mppi | cu-logmppi");
    simulate->add_option("--sigma", sim_sigma, "override mppi sigma");
    simulate->add_option("--n-traj", sim_n, "override mppi sample count");

    CLI::App* benchmark = app.add_subcommand("benchmark", "run an experiment suite");
    add_common(benchmark);
    benchmark->add_option("--model", model_path, "policy model file");
    benchmark->add_option("--suite", suite, "dynamic | c2c");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (build->parsed()) cmd_build_levelsets(args);
        else if (train_cmd->parsed()) cmd_train(args, levelsets_path);
        else if (sample->parsed()) cmd_sample(args, model_path, sample_method, sample_n, sample_sigma);
        else if (analyze->parsed()) cmd_analyze(args, model_path, levelsets_path, analyze_n);
        else if (simulate->parsed()) cmd_simulate(args, model_path, map_path, sim_method, sim_sigma, sim_n);
        else if (benchmark->parsed()) cmd_benchmark(args, model_path, suite);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
