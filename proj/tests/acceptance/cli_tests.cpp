// Exercises the installed CLI binary end to end: artifact round trips,
// reproducibility of emitted files, exit codes. Invoked by ctest with the
// binary path as argv[1].

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << what << "\n";
    if (!ok) ++failures;
}

int run(const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <path-to-cuniform-binary>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path base = fs::temp_directory_path() / "cuniform_cli_tests";
    fs::remove_all(base);
    fs::create_directories(base);

    const fs::path cfg = base / "tiny.ini";
    {
        std::ofstream out(cfg);
        out << "[levelset]\n"
               "dx = 0.1\n"
               "dy = 0.1\n"
               "dpsi_deg = 18\n"
               "n_steps = 5\n"
               "[train]\n"
               "hidden = 16\n"
               "epochs = 4\n"
               "lr = 0.002\n"
               "[sampler]\n"
               "n_actions = 9\n"
               "horizon = 5\n"
               "[mppi]\n"
               "n_samples = 120\n"
               "horizon = 6\n"
               "[world]\n"
               "goal_x = 1.5\n"
               "step_budget = 60\n"
               "[experiment]\n"
               "trials = 0\n"
               "methods = mppi\n"
               "n_obstacles = 5\n"
               "reveal = 1.0\n"
               "n_envs = 1\n";
    }
    const std::string common = " --config " + cfg.string() + " --seed 7";

    // build-levelsets
    const fs::path d1 = base / "ls";
    check(run(cli + " build-levelsets" + common + " --out-dir " + d1.string()) == 0,
          "build-levelsets exits 0");
    check(fs::exists(d1 / "levelsets.culs"), "levelsets.culs written");
    check(fs::exists(d1 / "resolved_config.json"), "resolved config recorded");

    // train twice with the same seed: byte-identical models
    const fs::path t1 = base / "t1", t2 = base / "t2";
    const std::string train_cmd = cli + " train" + common + " --levelsets " +
                                  (d1 / "levelsets.culs").string() + " --out-dir ";
    check(run(train_cmd + t1.string()) == 0, "train exits 0");
    check(run(train_cmd + t2.string()) == 0, "train rerun exits 0");
    check(same_bytes(t1 / "model.cunn", t2 / "model.cunn"),
          "same seed trains byte-identical models");
    check(same_bytes(t1 / "loss_trace.csv", t2 / "loss_trace.csv"), "loss traces identical");
    {
        std::ifstream in(t1 / "loss_trace.csv");
        std::string header;
        std::getline(in, header);
        check(header == "epoch,level_t,loss", "loss trace header");
    }

    // simulate on an empty map with the goal ahead: cu-mppi succeeds
    const fs::path s1 = base / "sim";
    check(run(cli + " simulate" + common + " --model " + (t1 / "model.cunn").string() +
              " --method cu-mppi --out-dir " + s1.string()) == 0,
          "simulate exits 0");
    {
        const std::string episode = slurp(s1 / "episode.csv");
        check(episode.find("success") != std::string::npos, "episode log reports success");
        check(fs::exists(s1 / "episode.ppm") && fs::exists(s1 / "episode.svg"),
              "episode images emitted");
    }

    // benchmark with zero trials: header-only results.csv
    const fs::path b1 = base / "bench";
    check(run(cli + " benchmark" + common + " --model " + (t1 / "model.cunn").string() +
              " --suite dynamic --out-dir " + b1.string()) == 0,
          "benchmark exits 0");
    check(slurp(b1 / "results.csv") ==
              "method,sigma,n_traj,env_id,reveal_dist,outcome,path_length\n",
          "zero-trial benchmark emits only the header");

    // exit codes: usage, config, runtime
    check(run(cli + " no-such-command") == 1, "unknown command exits 1");
    const fs::path bad_cfg = base / "bad.ini";
    {
        std::ofstream out(bad_cfg);
        out << "[vehicle]\nwarp_drive = on\n";
    }
    check(run(cli + " build-levelsets --config " + bad_cfg.string()) == 2,
          "unknown config key exits 2");
    check(run(cli + " train" + common + " --levelsets " + (base / "missing.culs").string() +
              " --out-dir " + (base / "x").string()) == 3,
          "missing input file exits 3");

    std::cout << (failures == 0 ? "cli_tests: all checks passed\n"
                                : "cli_tests: FAILURES present\n");
    return failures == 0 ? 0 : 1;
}
