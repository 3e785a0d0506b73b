#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowtomo/analysis.hpp"
#include "flowtomo/io.hpp"
#include "flowtomo/phantom.hpp"
#include "flowtomo/png.hpp"
#include "flowtomo/prealign.hpp"

using namespace flowtomo;

namespace {

enum ExitCode : int { ok = 0, other_error = 1, argument_error = 2, io_failure = 3, numerical_failure = 4 };

int exit_code_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::invalid_argument:
    case ErrorCode::shape_mismatch: return argument_error;
    case ErrorCode::io_error:
    case ErrorCode::size_mismatch:
    case ErrorCode::unknown_format: return io_failure;
    case ErrorCode::numerical_abort: return numerical_failure;
    }
    return other_error;
}

/// "name.json" -> "name_<tag>.json"
fs::path sibling(const fs::path& manifest, const std::string& tag) {
    fs::path p = manifest;
    p.replace_filename(manifest.stem().string() + "_" + tag + manifest.extension().string());
    return p;
}

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        require_arg(used == item.size() && !item.empty(), std::string("cannot parse ") + what + " '" + s + "'");
        out.push_back(v);
    }
    require_arg(!out.empty(), std::string("empty ") + what);
    return out;
}

std::vector<std::size_t> parse_binning(const std::string& s) {
    if (s == "auto") return {};
    std::vector<std::size_t> out;
    for (double v : parse_list(s, "binning list")) {
        require_arg(v >= 1 && v == std::floor(v), "binning factors must be positive integers");
        out.push_back(std::size_t(v));
    }
    return out;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct SolverFlags {
    bool no_flow = false;
    bool dense = false;
    bool shift_only = false;
    double alpha = 0.0;
    std::size_t admm_iters = 64;
    std::size_t inner_iters = 4;
    std::string binning = "auto";
    std::string projector = "direct";
    std::string adjoint_warp = "exact";
    std::size_t window_decrement = 2;
    std::uint64_t seed = 0;

    void attach(CLI::App* app) {
        app->add_flag("--no-flow", no_flow, "Disable flow estimation");
        auto* d = app->add_flag("--dense", dense, "Dense per-pixel flow (default)");
        auto* s = app->add_flag("--shift-only", shift_only, "One global shift per projection");
        d->excludes(s);
        app->add_option("--alpha", alpha, "TV weight (0 disables TV)")->check(CLI::NonNegativeNumber);
        app->add_option("--admm-iters", admm_iters, "Outer ADMM iterations")->check(CLI::PositiveNumber);
        app->add_option("--inner-iters", inner_iters, "Inner CG iterations")->check(CLI::PositiveNumber);
        app->add_option("--binning", binning, "auto or a coarse-to-fine list such as 4,2,1");
        app->add_option("--projector", projector, "direct or fourier");
        app->add_option("--adjoint-warp", adjoint_warp, "exact or negated-flow");
        app->add_option("--window-decrement", window_decrement, "Flow window shrink per iteration")
            ->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "Recorded in provenance; the solver itself is deterministic");
    }

    SolverConfig config() const {
        SolverConfig c;
        c.use_flow = !no_flow;
        c.dense_flow = !shift_only;
        c.alpha = alpha;
        c.n_admm = admm_iters;
        c.n_inner_cg = inner_iters;
        c.binning = parse_binning(binning);
        c.projector = parse_projector_kind(projector);
        c.adjoint_warp = parse_adjoint_warp(adjoint_warp);
        c.window_decrement = window_decrement;
        validate(c);
        return c;
    }

    json provenance() const {
        return {{"use_flow", !no_flow}, {"dense_flow", !shift_only},   {"alpha", alpha},
                {"admm_iters", admm_iters}, {"inner_iters", inner_iters}, {"binning", binning},
                {"projector", projector}, {"adjoint_warp", adjoint_warp}, {"window_decrement", window_decrement},
                {"seed", seed}};
    }
};

json error_json(const ErrorReport& e) {
    return {{"rel_l2", e.rel_l2}, {"rmse", e.rmse}, {"psnr", std::isfinite(e.psnr) ? json(e.psnr) : json("inf")},
            {"max_abs", e.max_abs}};
}

// ---- simulate

struct SimulateArgs {
    std::size_t n = 64, nz = 0, angles = 96, rotations = 2, tubes = 12;
    double range = std::numbers::pi, max_disp = 5.0, rate = 3.0, smoothness = 0.0;
    double radius_min = 0.0, radius_max = 0.0;
    std::uint64_t seed = 1;
    bool noise = false;
    std::optional<double> photons, background;
    std::string out;
};

void run_simulate(const SimulateArgs& a) {
    require_arg(a.rotations >= 1 && a.angles % a.rotations == 0, "--angles must be a multiple of --rotations");
    PhantomSpec ps;
    ps.n = a.n;
    ps.n_tubes = a.tubes;
    ps.radius_range = {a.radius_min > 0 ? a.radius_min : double(a.n) / 32.0,
                       a.radius_max > 0 ? a.radius_max : 3.0 * double(a.n) / 32.0};
    ps.seed = a.seed;
    DeformationSpec ds;
    ds.max_displacement = a.max_disp;
    ds.smoothness_sigma = a.smoothness > 0 ? a.smoothness : double(a.n) / 8.0;
    ds.rate = a.rate;
    ds.seed = a.seed + 1;
    const std::size_t nz = a.nz > 0 ? a.nz : a.n;
    require_arg(nz <= a.n, "--nz must not exceed --n");

    std::optional<NoiseSpec> noise;
    if (a.noise || a.photons || a.background) {
        NoiseSpec ns;
        ns.seed = a.seed + 2;
        if (a.photons) ns.poisson_photons = *a.photons;
        if (a.background) ns.background_amplitude = *a.background;
        if (!a.noise) {
            if (!a.photons) ns.poisson_photons.reset();
            if (!a.background) ns.background_amplitude.reset();
        }
        noise = ns;
    }

    auto full = make_tube_phantom<float>(ps);
    Volume<float> u0(nz, a.n, a.n);
    const std::size_t z0 = (a.n - nz) / 2;
    for (std::size_t z = 0; z < nz; ++z) {
        const auto src = full.plane(z0 + z);
        std::copy(src.begin(), src.end(), u0.plane(z).begin());
    }
    const auto field = make_deformation_field<float>(ds, a.n, nz);
    const ScanGeometry g = with_grid(make_interlaced(a.angles / a.rotations, a.rotations, a.range), a.n, nz);
    const auto data = simulate_scan(u0, field, g, a.rate, noise);
    const auto final_state = deform_volume(u0, field, 1.0);

    json prov = {{"command", "simulate"},
                 {"seed", a.seed},
                 {"phantom", {{"n", ps.n}, {"nz", nz}, {"n_tubes", ps.n_tubes},
                              {"radius_range", {ps.radius_range.first, ps.radius_range.second}},
                              {"intensity_range", {ps.intensity_range.first, ps.intensity_range.second}},
                              {"seed", ps.seed}}},
                 {"deformation", {{"max_displacement", ds.max_displacement},
                                  {"smoothness_sigma", ds.smoothness_sigma},
                                  {"rate", ds.rate},
                                  {"seed", ds.seed}}},
                 {"noise", nullptr}};
    if (noise) {
        prov["noise"] = {{"poisson_photons", noise->poisson_photons ? json(*noise->poisson_photons) : json(nullptr)},
                         {"background_amplitude",
                          noise->background_amplitude ? json(*noise->background_amplitude) : json(nullptr)},
                         {"background_sigma", noise->background_sigma},
                         {"seed", noise->seed}};
    }
    const fs::path dir(a.out);
    fs::create_directories(dir);
    save_projections(dir / "data.json", data, prov);
    save_volume(dir / "truth_initial.json", u0, prov);
    save_volume(dir / "truth_final.json", final_state, prov);
    save_field(dir / "field.json", field, prov);
    std::cout << "wrote " << (dir / "data.json").string() << " (" << g.n_angles_total() << " angles, " << a.n << "x"
              << a.n << "x" << nz << ")\n";
}

// ---- reconstruct

struct ReconstructArgs {
    std::string data, out, log, truth;
    SolverFlags flags;
};

void run_reconstruct(const ReconstructArgs& a) {
    const SolverConfig base = a.flags.config();
    const auto d = load_projections<float>(a.data);
    require(d.checksums_ok && d.dims_hash_ok, ErrorCode::size_mismatch, a.data + ": checksum or dims hash mismatch");

    std::ostringstream log;
    write_log_header(log);
    SolverConfig cfg = base;
    cfg.on_iteration = [&](const IterationRecord& r) { write_log_row(log, r); };
    const auto res = reconstruct(d.data, cfg);

    json prov = {{"command", "reconstruct"}, {"data", a.data}, {"solver", a.flags.provenance()},
                 {"iterations", res.state.iteration}};
    const fs::path out(a.out);
    ensure_parent(out);
    save_flow(sibling(out, "flow"), res.flow, prov);
    save_projections(sibling(out, "psi1"), res.state.psi1, prov);
    if (!a.log.empty()) {
        ensure_parent(a.log);
        write_text_atomic(a.log, log.str());
    }
    save_volume(out, res.u, prov);
    const double final_l = res.state.lagrangian_history.back();
    std::cout << "iterations " << res.state.iteration << ", final objective " << final_l << "\n";
    if (!a.truth.empty()) {
        const auto t = load_volume<float>(a.truth);
        std::cout << "error " << error_json(error_report(res.u, t.data)).dump() << "\n";
    }
}

// ---- prealign

struct PrealignArgs {
    std::string data, out, projector = "direct";
    std::size_t cg_iters = 32;
};

void run_prealign(const PrealignArgs& a) {
    const auto kind = parse_projector_kind(a.projector);
    const auto d = load_projections<float>(a.data);
    const auto pa = prealign(d.data, FlowParams{}, a.cg_iters, kind);
    json prov = {{"command", "prealign"}, {"data", a.data}, {"cg_iters", a.cg_iters}, {"projector", a.projector}};
    const fs::path out(a.out);
    ensure_parent(out);
    save_flow(sibling(out, "shifts"), pa.shifts, prov);
    save_projections(out, pa.data, prov);
    std::cout << "wrote " << out.string() << "\n";
}

// ---- fsc

struct FscArgs {
    std::string a, b, csv, png;
    double shell_width = 0.0;
};

void run_fsc(const FscArgs& a) {
    const auto va = load_volume<float>(a.a), vb = load_volume<float>(a.b);
    const auto c = fsc(va.data, vb.data, a.shell_width);
    if (!a.csv.empty()) {
        std::ostringstream os;
        write_fsc_csv(os, c);
        ensure_parent(a.csv);
        write_text_atomic(a.csv, os.str());
    }
    if (!a.png.empty()) {
        ensure_parent(a.png);
        write_png(a.png, plot_fsc(c));
    }
    std::cout << "crossing ";
    if (c.crossing_frequency)
        std::cout << *c.crossing_frequency << " cycles/voxel\n";
    else
        std::cout << "none\n";
}

// ---- report

struct ReportArgs {
    std::string volume, truth, data, flow, psi1, json_out;
};

void run_report(const ReportArgs& a) {
    require_arg(!a.truth.empty() || !a.data.empty(), "report needs --truth and/or --data");
    json out;
    if (!a.truth.empty()) {
        require_arg(!a.volume.empty(), "--truth requires --volume");
        const auto u = load_volume<float>(a.volume), t = load_volume<float>(a.truth);
        out["error"] = error_json(error_report(u.data, t.data));
    }
    if (!a.data.empty()) {
        require_arg(!a.volume.empty() && !a.flow.empty() && !a.psi1.empty(),
                    "--data requires --volume, --flow and --psi1");
        const auto d = load_projections<float>(a.data);
        AdmmState<float> s(d.data.geometry);
        s.u = load_volume<float>(a.volume).data;
        s.psi1 = load_projections<float>(a.psi1).data;
        s.flow = load_flow<float>(a.flow).data;
        require_same_shape(s.flow.fs.shape(), d.data.shape(), "report flow");
        const auto r = residual_report(d.data, s);
        out["residual"] = {{"total_misfit", r.total_misfit},
                           {"total_warped_misfit", r.total_warped_misfit},
                           {"alignment_gain", r.alignment_gain},
                           {"consensus", r.consensus}};
    }
    const std::string text = out.dump(2) + "\n";
    if (!a.json_out.empty()) {
        ensure_parent(a.json_out);
        write_text_atomic(a.json_out, text);
    }
    std::cout << text;
}

// ---- lcurve

struct LcurveArgs {
    std::string data, alphas = "0,0.01,0.1,1,10", out;
    SolverFlags flags;
};

void run_lcurve(const LcurveArgs& a) {
    const SolverConfig cfg = a.flags.config();
    const auto alphas = parse_list(a.alphas, "alpha list");
    const auto d = load_projections<float>(a.data);
    const auto pts = lcurve(d.data, cfg, alphas);
    const std::size_t corner = lcurve_corner(pts);
    std::ostringstream os;
    os.precision(10);
    os << "alpha,fidelity,tv,corner\n";
    for (std::size_t i = 0; i < pts.size(); ++i)
        os << pts[i].alpha << ',' << pts[i].fidelity << ',' << pts[i].tv << ',' << (i == corner ? 1 : 0) << '\n';
    if (!a.out.empty()) {
        ensure_parent(a.out);
        write_text_atomic(a.out, os.str());
    }
    std::cout << os.str() << "corner alpha " << pts[corner].alpha << "\n";
}

// ---- slices

struct SlicesArgs {
    std::string volume, flow, prefix, angles = "0";
};

void run_slices(const SlicesArgs& a) {
    require_arg(!a.volume.empty() || !a.flow.empty(), "slices needs --volume and/or --flow");
    const fs::path prefix(a.prefix);
    ensure_parent(prefix);
    auto name = [&](const std::string& tag) { return fs::path(prefix.string() + "_" + tag + ".png"); };
    if (!a.volume.empty()) {
        const auto u = load_volume<float>(a.volume);
        const auto s = orthogonal_slices(u.data);
        write_png(name("xy"), s[0]);
        write_png(name("xz"), s[1]);
        write_png(name("yz"), s[2]);
    }
    if (!a.flow.empty()) {
        const auto f = load_flow<float>(a.flow);
        for (double v : parse_list(a.angles, "angle index list")) {
            require_arg(v >= 0 && v == std::floor(v), "angle indices must be non-negative integers");
            const auto k = std::size_t(v);
            write_png(name("flow_" + std::to_string(k)), to_raster(flow_color_image(f.data, k)));
        }
    }
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"flowtomo: joint tomography and optical-flow deformation correction"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all)")->check(CLI::NonNegativeNumber);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Deforming tube phantom and its interlaced scan");
    c_sim->add_option("--n", sim.n, "Volume side")->check(CLI::Range(8, 4096));
    c_sim->add_option("--nz", sim.nz, "Slices kept (0 = n)");
    c_sim->add_option("--angles", sim.angles, "Total number of projections")->check(CLI::PositiveNumber);
    c_sim->add_option("--rotations", sim.rotations, "Interlaced rotations")->check(CLI::PositiveNumber);
    c_sim->add_option("--range", sim.range, "Angular range per rotation (rad)")->check(CLI::PositiveNumber);
    c_sim->add_option("--tubes", sim.tubes, "Number of tubes");
    c_sim->add_option("--radius-min", sim.radius_min, "Smallest tube radius (default n/32)");
    c_sim->add_option("--radius-max", sim.radius_max, "Largest tube radius (default 3n/32)");
    c_sim->add_option("--max-disp", sim.max_disp, "Peak displacement (px)")->check(CLI::NonNegativeNumber);
    c_sim->add_option("--rate", sim.rate, "Deformation rate");
    c_sim->add_option("--smoothness", sim.smoothness, "Field smoothing sigma (default n/8)");
    c_sim->add_option("--seed", sim.seed, "Seed");
    c_sim->add_flag("--noise", sim.noise, "Poisson and background noise with default strengths");
    c_sim->add_option("--photons", sim.photons, "Poisson photon count")->check(CLI::PositiveNumber);
    c_sim->add_option("--background", sim.background, "Background amplitude")->check(CLI::NonNegativeNumber);
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    ReconstructArgs rec;
    auto* c_rec = app.add_subcommand("reconstruct", "ADMM reconstruction");
    c_rec->add_option("--data", rec.data, "Projection manifest")->required();
    c_rec->add_option("--out", rec.out, "Output volume manifest")->required();
    c_rec->add_option("--log", rec.log, "Per-iteration CSV log");
    c_rec->add_option("--truth", rec.truth, "Ground truth volume for an error report");
    rec.flags.attach(c_rec);

    PrealignArgs pre;
    auto* c_pre = app.add_subcommand("prealign", "Rigid per-projection alignment against the first rotation");
    c_pre->add_option("--data", pre.data, "Projection manifest")->required();
    c_pre->add_option("--out", pre.out, "Aligned projection manifest")->required();
    c_pre->add_option("--cg-iters", pre.cg_iters, "CG iterations for the reference")->check(CLI::PositiveNumber);
    c_pre->add_option("--projector", pre.projector, "direct or fourier");

    FscArgs fa;
    auto* c_fsc = app.add_subcommand("fsc", "Fourier shell correlation of two volumes");
    c_fsc->add_option("a", fa.a, "First volume")->required();
    c_fsc->add_option("b", fa.b, "Second volume")->required();
    c_fsc->add_option("--csv", fa.csv, "Curve CSV");
    c_fsc->add_option("--png", fa.png, "Curve plot");
    c_fsc->add_option("--shell-width", fa.shell_width, "Shell width in cycles/voxel (0 = one bin)")
        ->check(CLI::NonNegativeNumber);

    ReportArgs rep;
    auto* c_rep = app.add_subcommand("report", "Error and residual reports");
    c_rep->add_option("--volume", rep.volume, "Reconstructed volume");
    c_rep->add_option("--truth", rep.truth, "Ground truth volume");
    c_rep->add_option("--data", rep.data, "Measured projections");
    c_rep->add_option("--flow", rep.flow, "Estimated flow");
    c_rep->add_option("--psi1", rep.psi1, "Projection-domain split variable");
    c_rep->add_option("--json", rep.json_out, "Write the report here as well");

    LcurveArgs lc;
    auto* c_lc = app.add_subcommand("lcurve", "TV weight sweep");
    c_lc->add_option("--data", lc.data, "Projection manifest")->required();
    c_lc->add_option("--alphas", lc.alphas, "Increasing comma-separated weights");
    c_lc->add_option("--out", lc.out, "CSV output");
    lc.flags.attach(c_lc);

    SlicesArgs sl;
    auto* c_sl = app.add_subcommand("slices", "PNG slices and flow colour images");
    c_sl->add_option("--volume", sl.volume, "Volume manifest");
    c_sl->add_option("--flow", sl.flow, "Flow manifest");
    c_sl->add_option("--angles", sl.angles, "Flow angle indices, comma separated");
    c_sl->add_option("--prefix", sl.prefix, "Output path prefix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "flowtomo: error[invalid-argument]: " << e.what() << "\n\n" << app.help();
        return argument_error;
    }

    try {
        set_threads(threads);
        if (*c_sim) run_simulate(sim);
        else if (*c_rec) run_reconstruct(rec);
        else if (*c_pre) run_prealign(pre);
        else if (*c_fsc) run_fsc(fa);
        else if (*c_rep) run_report(rep);
        else if (*c_lc) run_lcurve(lc);
        else if (*c_sl) run_slices(sl);
    } catch (const Error& e) {
        std::cerr << "flowtomo: error[" << to_string(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "flowtomo: error[io-error]: " << e.what() << "\n";
        return io_failure;
    } catch (const json::exception& e) {
        std::cerr << "flowtomo: error[unknown-format]: " << e.what() << "\n";
        return io_failure;
    } catch (const std::exception& e) {
        std::cerr << "flowtomo: error[internal]: " << e.what() << "\n";
        return other_error;
    }
    return ok;
}

int main(int argc, char** argv) { return cli_main(argc, argv); }
