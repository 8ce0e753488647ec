#include "vhi/cli_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <mutex>
#include <thread>

namespace {

struct Common {
    std::string config, preset_name, out;
    std::optional<int> seed;
    std::optional<double> dt, T, tol;
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "config file (line-based [section] key = value)");
    sub->add_option("--preset", c.preset_name, "named preset, used when no --config is given");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--seed", c.seed, "RNG seed");
    sub->add_option("--dt", c.dt, "time step override");
    sub->add_option("--T", c.T, "horizon override");
    sub->add_option("--tol", c.tol, "outer tolerance override");
    sub->add_option("--set", c.sets, "section.key=value override (repeatable)");
}

vhi::RunConfig resolve(const Common& c) {
    vhi::RunConfig cfg = !c.config.empty()        ? vhi::load_config(c.config)
                         : !c.preset_name.empty() ? vhi::preset(c.preset_name)
                                                  : vhi::RunConfig{};
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw vhi::config_error("--set expects section.key=value, got '" + s + "'");
        vhi::set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!c.out.empty()) cfg.output.dir = c.out;
    if (c.seed) cfg.scheme.seed = *c.seed;
    if (c.dt) cfg.scheme.dt = *c.dt;
    if (c.T) cfg.scheme.T = *c.T;
    if (c.tol) cfg.scheme.outer_tol = *c.tol;
    return cfg;
}

template <class F>
int guarded(const Common& c, F&& f) {
    try {
        return f(resolve(c));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::locale::global(std::locale::classic());
    CLI::App app{"vhi: viscoelastic frictional contact with rate-and-state friction"};
    app.require_subcommand(1);

    Common run_o, check_o, flow_o, sweep_o;
    long check_samples = 100000;
    std::vector<double> ladder{1e-2, 1e-3, 1e-4};
    std::string sweep_key;
    std::vector<std::string> sweep_values;
    unsigned sweep_threads = std::max(1u, std::thread::hardware_concurrency());

    auto* run = app.add_subcommand("run", "run the scheme and write trajectory.csv + report.txt");
    add_common(run, run_o);

    auto* check = app.add_subcommand("check", "evaluate smallness conditions and hypothesis probes");
    add_common(check, check_o);
    check->add_option("--samples", check_samples, "samples per hypothesis probe");

    auto* flow = app.add_subcommand("flowmap", "continuous-dependence experiment on [0, T/2]");
    add_common(flow, flow_o);
    flow->add_option("--deltas", ladder, "perturbation sizes relative to |w0|_V")->delimiter(',');

    vhi::RsfParams rsf = vhi::RsfParams::table1();
    double a_lo = rsf.alpha0 - 1, a_hi = rsf.alpha0 + 1, r_fix = 1e-9;
    int points = 401;
    std::string curves_out = "out";
    bool a_lo_set = false, a_hi_set = false;
    auto* curves = app.add_subcommand("rsf-curves", "G and mu against alpha, exact and first-order");
    curves->add_option("--a", rsf.a);
    curves->add_option("--b", rsf.b);
    curves->add_option("--mu0", rsf.mu0);
    curves->add_option("--v0", rsf.v0);
    curves->add_option("--L", rsf.L);
    curves->add_option("--alpha0", rsf.alpha0, "expansion point (default ln(v0/L))");
    auto* lo_opt = curves->add_option("--alpha-min", a_lo);
    auto* hi_opt = curves->add_option("--alpha-max", a_hi);
    curves->add_option("--points", points);
    curves->add_option("--r", r_fix, "fixed slip rate");
    curves->add_option("--out", curves_out);

    auto* sweep = app.add_subcommand("sweep", "independent runs over one parameter, one subdirectory each");
    add_common(sweep, sweep_o);
    sweep->add_option("--param", sweep_key, "section.key to vary")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');
    sweep->add_option("--threads", sweep_threads);

    CLI11_PARSE(app, argc, argv);

    if (*run) return guarded(run_o, [](const vhi::RunConfig& c) { return vhi::cmd_run(c); });
    if (*check)
        return guarded(check_o, [&](const vhi::RunConfig& c) { return vhi::cmd_check(c, std::cout, std::cerr, check_samples); });
    if (*flow) return guarded(flow_o, [&](const vhi::RunConfig& c) { return vhi::cmd_flowmap(c, ladder); });
    if (*curves) {
        a_lo_set = lo_opt->count() > 0;
        a_hi_set = hi_opt->count() > 0;
        if (!a_lo_set) a_lo = rsf.alpha0 - 1;
        if (!a_hi_set) a_hi = rsf.alpha0 + 1;
        try {
            rsf.validate();
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        return vhi::cmd_rsf_curves(rsf, a_lo, a_hi, points, r_fix, curves_out);
    }
    if (*sweep) {
        return guarded(sweep_o, [&](const vhi::RunConfig& base) {
            std::vector<vhi::RunConfig> cfgs;
            for (std::size_t i = 0; i < sweep_values.size(); ++i) {
                vhi::RunConfig c = base;
                vhi::set_config_value(c, sweep_key, sweep_values[i]);
                c.output.dir = base.output.dir + "/run" + std::to_string(i);
                cfgs.push_back(c);
            }
            std::vector<int> codes(cfgs.size(), 0);
            std::vector<std::ostringstream> logs(cfgs.size()), errs(cfgs.size());
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (std::size_t i; (i = next++) < cfgs.size();) codes[i] = vhi::cmd_run(cfgs[i], logs[i], errs[i]);
            };
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < std::min<std::size_t>(sweep_threads, cfgs.size()); ++t) pool.emplace_back(worker);
            pool.clear();
            int worst = 0;
            for (std::size_t i = 0; i < cfgs.size(); ++i) {
                std::cout << sweep_key << " = " << sweep_values[i] << " -> " << cfgs[i].output.dir << ": "
                          << logs[i].str() << errs[i].str();
                worst = std::max(worst, codes[i] == 1 ? 3 : codes[i]);
            }
            return worst == 3 ? 1 : worst;
        });
    }
    return 1;
}
