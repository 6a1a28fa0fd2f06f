// cr3bp: command-line driver for the periodic orbit / manifold / connection pipeline.
//
// Exit codes: 0 success, 1 numerical failure, 2 configuration error, 3 I/O error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cr3bp/errors.hpp"
#include "cr3bp/pipeline.hpp"

using namespace cr3bp;
using namespace cr3bp::io;
namespace fs = std::filesystem;

namespace {

const std::string& input(const RunConfig& c, const std::string& name) {
    auto it = c.inputs.find(name);
    if (it == c.inputs.end() || it->second.empty()) throw ConfigError("missing input --" + name);
    return it->second;
}

fs::path out_path(const RunConfig& c, const std::string& name) { return fs::path(c.output_dir) / name; }

void save_as(const RunConfig& c, SolutionRecord rec, const std::string& name, int step) {
    rec.parent_run = c.run_id;
    rec.step = step;
    save(rec, out_path(c, name));
}

void print_events(const std::vector<BranchEvent>& events, const MassRatio& mu) {
    for (const auto& ev : events) {
        const StateVector u = ev.location.at_start().head<6>();
        std::printf("  event %-18s %-10s step %4d  T %.6f  E %.6f\n", event_name(ev.kind), ev.label.c_str(), ev.step,
                    ev.location.scalars().values(0), energy(u, mu));
    }
}

void print_orbit(const char* what, const PeriodicOrbit& o) {
    std::printf("%s %s  T %.6f  E %.6f  sigma %.1e  exponents", what, o.family.c_str(), o.period, o.energy, o.sigma);
    for (const auto& e : nontrivial_exponents(o.multipliers)) std::printf(" (%.6f, %.6f)", e.real(), e.imag());
    std::printf("\n");
}

int cmd_libration(const RunConfig& c) {
    const auto points = libration_points(MassRatio(c.mu));
    for (const auto& p : points) {
        std::printf("L%d  x %.15f  y %.15f\n", p.index, p.state(0), p.state(1));
        for (const auto& e : p.eigenvalues) std::printf("    %+.10f %+.10fi\n", e.real(), e.imag());
    }
    write_atomic(out_path(c, "libration.csv"), libration_csv(points));
    return 0;
}

int cmd_family(const RunConfig& c) {
    const MassRatio mu(c.mu);
    const FamilyRun run = run_family(c);
    std::printf("family %s: %zu members\n", run.primary_tag.c_str(), run.primary.orbits.size());
    print_events(run.primary.events, mu);
    write_atomic(out_path(c, run.secondary ? "primary_family.csv" : "family.csv"), family_csv(run.primary, mu));
    if (run.secondary) {
        std::printf("family %s: %zu members\n", run.secondary_tag.c_str(), run.secondary->orbits.size());
        print_events(run.secondary->events, mu);
        write_atomic(out_path(c, "family.csv"), family_csv(*run.secondary, mu));
    }
    const FamilyResult& fam = run.final_family();
    for (std::size_t i = 0; i < fam.targets.size(); ++i) {
        print_orbit("target", fam.targets[i]);
        save_as(c, to_record(fam.targets[i], mu), "target_" + std::to_string(i) + ".sol", static_cast<int>(i));
    }
    if (c.store_every > 0) {
        for (std::size_t i = 0; i < fam.orbits.size(); ++i) {
            const int step = i < fam.records.size() ? fam.records[i].index : static_cast<int>(i) + 1;
            if (step % c.store_every == 0) save_as(c, to_record(fam.orbits[i], mu), "orbit_" + std::to_string(step) + ".sol", step);
        }
    }
    return fam.underflow ? 1 : 0;
}

int cmd_eigenfunction(const RunConfig& c) {
    const MassRatio mu(c.mu);
    const PeriodicOrbit orbit = orbit_from(load(input(c, "orbit")));
    const PacketRun run = run_eigenfunction(c, orbit);
    const auto& g = run.growth;
    std::printf("growth: lambda %.10f  seed %.10f  sigma_max %.1e  orbit drift %.1e  lambda drift %.1e  steps %d\n",
                g.packet.lambda(), g.seed_lambda, g.sigma_max, g.orbit_drift, g.lambda_drift, g.steps);
    if (run.family) write_atomic(out_path(c, "packet_family.csv"), packet_csv(*run.family, mu));
    const PacketCheck chk = check_packet(run.packet, mu);
    std::printf("packet: T %.6f  E %.6f  lambda %.6f  rho %.3f  ode residual %.1e\n", run.packet.period(),
                packet_energy(run.packet, mu), run.packet.lambda(), run.packet.rho(), chk.ode_residual);
    save_as(c, to_record(run.packet, mu), "packet.sol", g.steps);
    return 0;
}

ManifoldSettings manifold_settings(const RunConfig& c) {
    ManifoldSettings ms;
    ms.time_sign = c.time_sign;
    ms.continuation.newton.tol = c.newton_tol;
    ms.continuation.max_steps = c.sweep_steps;
    ms.continuation.ds_max = c.sweep_ds_max;
    ms.max_time = c.max_time;
    return ms;
}

int cmd_manifold_grow(const RunConfig& c) {
    const MassRatio mu(c.mu);
    const EigenPacket packet = packet_from(load(input(c, "packet")));
    const ManifoldOrbit o = grow_orbit(packet, mu, c.eps, c.section, manifold_settings(c));
    std::printf("manifold orbit: T_r %.6f  eps %.3e  intervals %d  section defect %.1e\n", o.integration_time(), o.eps(),
                o.r.mesh().intervals(), o.section_defect());
    save_as(c, to_record(o, mu), "manifold.sol", 0);
    return 0;
}

int cmd_manifold_sweep(const RunConfig& c) {
    const MassRatio mu(c.mu);
    const ManifoldOrbit start = manifold_from(load(input(c, "manifold")));
    const FundamentalDomain dom = fundamental_domain(start.eps(), start.lambda);
    const double cap = c.tr_target;
    const SweepResult sw = sweep_manifold(start, mu, dom, manifold_settings(c), [cap](const ManifoldOrbit& o) {
        return cap > 0.0 && o.integration_time() > cap;
    });
    std::printf("sweep: %s %s, %zu orbits\n", termination_name(sw.termination), sw.obstacle_reason.c_str(),
                sw.orbits.size());
    write_atomic(out_path(c, "sweep.csv"), sweep_csv(sw, mu));
    if (sw.orbits.empty()) return 1;
    const ManifoldOrbit& last = sw.orbits.back();
    std::printf("last: eps %.10e  T_r %.6f\n", last.eps(), last.integration_time());
    if (sw.termination != SweepTermination::DomainCovered) {
        const ObstacleFit fit = obstacle_log_fit(sw.orbits);
        const ShootingComparison cmp = shooting_compare(last, mu);
        std::printf("obstacle fit: slope %.4f  r^2 %.4f   shooting horizon %.3f of T_r %.3f\n", fit.slope,
                    fit.r_squared, cmp.horizon, last.integration_time());
    }
    for (std::size_t i = 0; c.store_every > 0 && i < sw.orbits.size(); ++i) {
        const int step = sw.records[i].index;
        if (step % c.store_every == 0) save_as(c, to_record(sw.orbits[i], mu), "manifold_" + std::to_string(step) + ".sol", step);
    }
    save_as(c, to_record(last, mu), "manifold_last.sol", sw.records.back().index);
    return 0;
}

void print_record(const ConnectionRecord& r) {
    std::printf("  step %4d  E %.6f  lambda %.5f  eps %+.4e  windings %d (L%d)  period %.4f  rot %.4f  max|z| %.3e ",
                r.step, r.energy, r.lambda, r.eps, r.stats.windings, r.stats.libration_index, r.period,
                r.stats.rotation_number, r.stats.final_max_z);
    for (const auto& h : r.hints) std::printf(" [%s]", h.c_str());
    std::printf("\n");
}

int cmd_connect(const RunConfig& c) {
    const MassRatio mu(c.mu);
    CoupledConnection start;
    if (c.inputs.count("connection")) {
        start = connection_from(load(input(c, "connection")));
    } else {
        start = assemble_coupled(packet_from(load(input(c, "packet"))), manifold_from(load(input(c, "manifold"))), mu);
    }
    std::printf("start: E %.6f  residual %.1e\n", start.energy(mu), coupled_residual(start, mu));
    ConnectionSettings cs;
    cs.continuation.max_steps = c.connect_steps;
    cs.continuation.newton.tol = c.newton_tol;
    cs.energy_min = c.energy_min;
    cs.energy_max = c.energy_max;
    cs.closure_tol = c.closure_tol;
    cs.lambda_min = c.lambda_min;
    cs.store_every = c.store_every;
    cs.mesh = manifold_settings(c);
    const ConnectionFamily fam = continue_connection(start, mu, cs, c.direction);
    for (const auto& r : fam.records) print_record(r);
    print_events(fam.events, mu);
    std::printf("termination: %s  folds %d  closure %.3e\n", fam.termination.c_str(), fam.folds, fam.closure_metric);
    write_atomic(out_path(c, "connection.csv"), connection_csv(fam));
    for (std::size_t i = 0; i < fam.stored.size(); ++i) {
        save_as(c, to_record(fam.stored[i], mu), "connection_" + std::to_string(i) + ".sol", static_cast<int>(i));
    }
    save_as(c, to_record(fam.last, mu), "connection_last.sol", static_cast<int>(fam.records.size()));
    return 0;
}

int cmd_classify(const RunConfig& c) {
    const MassRatio mu(c.mu);
    const CoupledConnection conn = connection_from(load(input(c, "connection")));
    const ConnectionRecord r = classify_connection(conn, mu);
    print_record(r);
    if (r.insufficient_windings) std::printf("  fewer than 3 windings: no hints\n");
    return 0;
}

int cmd_plot(const RunConfig& c) {
    if (c.inputs.count("solution")) {
        const SolutionRecord rec = load(input(c, "solution"));
        const std::string stem = fs::path(input(c, "solution")).stem().string();
        const std::pair<int, int> views[] = {{0, 1}, {0, 2}, {1, 2}};
        const char* names[] = {"xy", "xz", "yz"};
        for (int k = 0; k < 3; ++k) {
            write_atomic(out_path(c, stem + "_" + names[k] + ".svg"),
                         projection_svg(rec.solution, views[k].first, views[k].second));
        }
        return 0;
    }
    const CsvTable t = parse_csv(read_file(input(c, "csv")));
    std::string xs, ys;
    if (std::find(t.header.begin(), t.header.end(), "log_abs_eps") != t.header.end()) {
        xs = "E";
        ys = "log_abs_eps";
    } else if (std::find(t.header.begin(), t.header.end(), "T_r") != t.header.end()) {
        xs = "eps";
        ys = "T_r";
    } else {
        xs = "E";
        ys = "T";
    }
    std::vector<double> x, y;
    for (const auto& row : t.rows) {
        x.push_back(parse_double(row.at(t.column(xs))));
        y.push_back(parse_double(row.at(t.column(ys))));
    }
    const std::string stem = fs::path(input(c, "csv")).stem().string();
    write_atomic(out_path(c, stem + ".svg"), diagram_svg(x, y, xs, ys));
    return 0;
}

// Load --config before CLI11 parses, so flags bound to the loaded values override the file.
RunConfig preload(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config") return load_config(argv[i + 1]);
        if (a.rfind("--config=", 0) == 0) return load_config(a.substr(9));
    }
    return RunConfig{};
}

}  // namespace

int main(int argc, char** argv) {
    try {
        RunConfig c = preload(argc, argv);
        CLI::App app{"Periodic orbits, Floquet eigenfunctions, unstable manifolds and orbit-to-torus connections "
                     "in the circular restricted three-body problem"};
        app.require_subcommand(1);
        std::string config_path;
        app.add_option("--config", config_path, "JSON run configuration");
        app.add_option("--mu", c.mu, "mass ratio");
        std::string from;
        app.add_option("--from", from, "start libration point: L1 or L2");
        app.add_option("--pair", c.pair, "eigenpair at the libration point: planar or vertical");
        app.add_option("--switch-at", c.switch_at, "continue the family bifurcating at this branch point");
        app.add_option("--family", c.family, "family tag");
        app.add_option("--intervals", c.intervals, "mesh intervals N");
        app.add_option("--degree", c.degree, "collocation points per interval m");
        app.add_option("--tol", c.newton_tol, "Newton tolerance");
        app.add_option("--ds0", c.ds0, "initial step");
        app.add_option("--ds-max", c.ds_max, "maximal step");
        app.add_option("--max-steps", c.max_steps, "continuation steps");
        app.add_option("--adapt-every", c.adapt_every, "mesh adaptation period");
        app.add_option("--energy-min", c.energy_min, "stop below this energy");
        app.add_option("--energy-max", c.energy_max, "stop above this energy");
        app.add_option("--target-energy", c.target_energies, "report family members at these energies");
        app.add_option("--target-period", c.target_periods, "report family members at these periods");
        app.add_flag("--stop-at-target", c.stop_at_last_target, "stop once every target has been crossed");
        app.add_option("--lambda", c.lambda_seed, "Floquet exponent seed");
        app.add_option("--packet-energy", c.packet_energy, "continue the packet to this energy");
        app.add_option("--packet-period", c.packet_period, "continue the packet to this period");
        app.add_option("--section-index", c.section.index, "state coordinate fixed on the section (0 = x)");
        app.add_option("--section-value", c.section.value, "section position");
        app.add_option("--crossing", c.section.crossing, "which intersection with the section ends the orbit");
        app.add_option("--eps", c.eps, "initial offset along the eigenfunction");
        app.add_option("--time-sign", c.time_sign, "+1 unstable, -1 stable manifold");
        app.add_option("--tr-target", c.tr_target, "stop the sweep once T_r exceeds this");
        app.add_option("--sweep-steps", c.sweep_steps, "sweep continuation steps");
        app.add_option("--sweep-ds-max", c.sweep_ds_max, "maximal sweep step");
        app.add_option("--max-time", c.max_time, "T_r cap for obstacle detection");
        app.add_option("--connect-steps", c.connect_steps, "connection continuation steps");
        app.add_option("--direction", c.direction, "initial sign of dT");
        app.add_option("--out", c.output_dir, "output directory");
        app.add_option("--store-every", c.store_every, "write every k-th solution");
        app.add_option("--run-id", c.run_id, "tag written into solution files");
        for (const char* name : {"orbit", "packet", "manifold", "connection", "solution", "csv"}) {
            app.add_option_function<std::string>(std::string("--") + name,
                                                 [&c, name](const std::string& v) { c.inputs[name] = v; },
                                                 std::string("input ") + name + " file");
        }
        const char* commands[][2] = {{"libration", "libration points and their eigenvalues"},
                                     {"family", "periodic-orbit family from a libration point"},
                                     {"eigenfunction", "Floquet eigenfunction packet of a stored orbit"},
                                     {"manifold-grow", "starting manifold orbit up to the section"},
                                     {"manifold-sweep", "sweep the manifold over the fundamental domain"},
                                     {"connect", "continue the coupled orbit-eigenfunction-manifold system"},
                                     {"classify", "classification monitors of a stored connection"},
                                     {"plot", "SVG projections of a solution file or diagram of a CSV"}};
        for (const auto& cmd : commands) app.add_subcommand(cmd[0], cmd[1])->fallthrough();
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
        if (!from.empty()) {
            if (from != "L1" && from != "L2" && from != "L3") throw ConfigError("--from must be L1, L2 or L3");
            c.libration = from[1] - '0';
        }
        c.validate();
        fs::create_directories(c.output_dir);
        write_atomic(out_path(c, "config.json"), dump_config(c));

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "libration") return cmd_libration(c);
        if (cmd == "family") return cmd_family(c);
        if (cmd == "eigenfunction") return cmd_eigenfunction(c);
        if (cmd == "manifold-grow") return cmd_manifold_grow(c);
        if (cmd == "manifold-sweep") return cmd_manifold_sweep(c);
        if (cmd == "connect") return cmd_connect(c);
        if (cmd == "classify") return cmd_classify(c);
        return cmd_plot(c);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 1;
    }
}
