#include "ssa/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ssa/data.hpp"
#include "ssa/errors.hpp"
#include "ssa/fusion_model.hpp"
#include "ssa/kernels.hpp"
#include "ssa/metrics.hpp"
#include "ssa/run_config.hpp"
#include "ssa/trainer.hpp"

namespace fs = std::filesystem;

namespace ssa {

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
    cmd->add_option("--config", a.path, "run configuration file (key = value lines)");
    cmd->add_option("--set", a.sets, "override one key, e.g. --set train.steps=50");
    cmd->add_option("--seed", a.seed, "overrides the configured seed");
}

RunConfig resolve_config(const ConfigArgs& a) {
    RunConfig cfg = a.path.empty() ? RunConfig{} : load_run_config(a.path);
    for (const auto& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.seed) cfg.train.seed = *a.seed;
    cfg.validate();
    return cfg;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------------------

void cmd_simulate(const ConfigArgs& ca, const std::string& out_dir, std::ostream& out) {
    const RunConfig cfg = resolve_config(ca);
    std::vector<DatasetBucket> buckets;
    for (const auto& spec : bucket_specs(cfg)) buckets.push_back(build_bucket(spec, cfg.train.seed));
    ensure_dir(out_dir);
    write_text(fs::path(out_dir) / "run_config.txt", to_text(cfg));
    for (const auto& b : buckets) {
        write_bucket(out_dir, b);
        out << b.dataset_id << ": " << b.samples.size() << " samples (C=" << b.bands << ", c=" << b.msi_bands
            << ", scale=" << b.scale << ", patch=" << b.patch_h << "x" << b.patch_w << ")\n";
    }
}

void cmd_train(const ConfigArgs& ca, const std::string& data_dir, const std::string& out_dir,
               const std::string& resume, int stop_after, std::ostream& out) {
    const RunConfig cfg = resolve_config(ca);
    const auto buckets = load_corpus(data_dir);
    check_buckets(buckets, cfg.train.model);
    ensure_dir(out_dir);
    write_text(fs::path(out_dir) / "run_config.txt", to_text(cfg));

    TrainerState st;
    if (resume.empty()) {
        st = initial_state(cfg.train);
    } else {
        st = load_checkpoint(resume);
        if (!(st.model.config() == cfg.train.model)) {
            throw ConfigError("checkpoint '" + resume + "' was trained with a different model configuration");
        }
    }
    const fs::path log_path = fs::path(out_dir) / "train_log.csv";
    const fs::path probe_path = fs::path(out_dir) / "probe_log.csv";
    const auto mode = resume.empty() ? std::ios::trunc : std::ios::app;
    std::ofstream log(log_path, std::ios::out | mode);
    std::ofstream probe(probe_path, std::ios::out | mode);
    if (!log || !probe) throw Error("cannot open logs in '" + out_dir + "'");
    if (resume.empty()) {
        log << train_log_header() << '\n';
        probe << "step,l1,loss\n";
    }
    TrainOutputs outputs;
    outputs.checkpoint_path = (fs::path(out_dir) / "checkpoint.ssa").string();
    outputs.log = &log;
    outputs.probe_log = &probe;
    outputs.stop_after = stop_after;
    const int start = st.step;
    const auto summary = train(st, cfg.train, buckets, outputs);
    out << "trained steps " << start << ".." << st.step << " of " << cfg.train.steps;
    if (!summary.steps.empty()) out << ", last loss " << fmt(summary.steps.back().loss);
    out << "\ncheckpoint: " << outputs.checkpoint_path << '\n';
}

void cmd_fuse(const std::string& ckpt, const std::string& y_path, const std::string& z_path,
              const std::string& out_path, std::optional<double> scale, const std::vector<int>& out_size,
              std::ostream& out) {
    const Model model = load_model(ckpt);
    const Tensor4 y = read_tensor(y_path);
    Tensor4 z = read_tensor(z_path);
    int H = z.h();
    int W = z.w();
    if (!out_size.empty()) {
        H = out_size[0];
        W = out_size[1];
    } else if (scale) {
        if (!(*scale > 0.0)) throw ArgumentError("--scale must be positive");
        H = static_cast<int>(std::lround(y.h() * *scale));
        W = static_cast<int>(std::lround(y.w() * *scale));
    }
    if (H < 1 || W < 1) throw ArgumentError("output size must be positive");
    if (z.h() != H || z.w() != W) z = bicubic_resize(z, H, W);
    const Tensor4 fused = fuse(model, y, z);
    if (!fused.all_finite()) throw NumericError("fused output contains non-finite values");
    write_tensor(out_path, fused);
    out << "fused " << to_string(y.dims()) << " + " << to_string(z.dims()) << " -> " << to_string(fused.dims())
        << " in " << out_path << '\n';
}

void cmd_eval(const std::string& pred_path, const std::string& gt_path, double scale, double peak,
              const std::string& csv, const std::string& dataset, std::ostream& out, std::ostream& err) {
    const Tensor4 pred = read_tensor(pred_path);
    const Tensor4 gt = read_tensor(gt_path);
    const MetricsReport r = evaluate(pred, gt, scale, peak, dataset);
    out << metrics_csv_header() << '\n' << metrics_csv_row(r) << '\n';
    if (r.sam_zero_norm_pixels > 0) err << "note: " << r.sam_zero_norm_pixels << " zero-norm pixels counted as 0 in SAM\n";
    if (r.ssim_window_shrunk) err << "note: SSIM window shrunk to fit the image\n";
    if (!csv.empty()) {
        const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
        std::ofstream f(csv, std::ios::app);
        if (!f) throw Error("cannot open '" + csv + "' for appending");
        if (fresh) f << metrics_csv_header() << '\n';
        f << metrics_csv_row(r) << '\n';
    }
}

void cmd_export_kernels(const std::string& ckpt, const std::string& out_csv, std::ostream& out) {
    const Model model = load_model(ckpt);
    std::ofstream f(out_csv);
    if (!f) throw Error("cannot open '" + out_csv + "' for writing");
    write_kernel_slabs_csv(f, model.mk_in, model.mk_out);
    if (!f) throw Error("write to '" + out_csv + "' failed");
    out << "exported " << 2 * model.config().c_max << " slabs to " << out_csv << '\n';
}

void cmd_sweep(const ConfigArgs& ca, const std::string& ckpt, const std::vector<double>& scales, int patches,
               const std::string& out_csv, std::ostream& out) {
    const RunConfig cfg = resolve_config(ca);
    const Model model = load_model(ckpt);
    std::ostringstream rows;
    rows << "dataset,scale,method,psnr\n";
    for (const auto& spec : bucket_specs(cfg)) {
        const auto srf = synth_srf(spec.bands, spec.msi_bands);
        for (double r : scales) {
            double model_psnr = 0, bicubic_psnr = 0;
            for (int k = 0; k < patches; ++k) {
                const Tensor4 gt = held_out_patch(spec, cfg.train.seed, k);
                const FusionSample s = simulate_at_scale(gt, r, srf);
                model_psnr += psnr(fuse(model, s.y_lr, s.z_hr), gt, 1.0);
                bicubic_psnr += psnr(bicubic_resize(s.y_lr, gt.h(), gt.w()), gt, 1.0);
            }
            rows << spec.dataset_id << ',' << fmt(r) << ",model," << fmt(model_psnr / patches) << '\n';
            rows << spec.dataset_id << ',' << fmt(r) << ",bicubic," << fmt(bicubic_psnr / patches) << '\n';
        }
    }
    if (out_csv.empty()) {
        out << rows.str();
    } else {
        write_text(out_csv, rows.str());
        out << "wrote " << out_csv << '\n';
    }
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Band- and scale-agnostic hyperspectral/multispectral fusion"};
    app.require_subcommand(1);

    ConfigArgs sim_cfg;
    std::string sim_out;
    auto* sim = app.add_subcommand("simulate", "synthesise a Wald-protocol corpus");
    add_config_options(sim, sim_cfg);
    sim->add_option("--out", sim_out, "output directory")->required();

    ConfigArgs train_cfg;
    std::string train_data, train_out, train_resume;
    int stop_after = -1;
    auto* tr = app.add_subcommand("train", "joint training over every bucket in a corpus");
    add_config_options(tr, train_cfg);
    tr->add_option("--data", train_data, "corpus directory (with *.manifest files)")->required();
    tr->add_option("--out", train_out, "run directory")->required();
    tr->add_option("--resume", train_resume, "continue from a checkpoint");
    tr->add_option("--stop-after", stop_after, "pause after this many completed steps");

    std::string fuse_ckpt, fuse_y, fuse_z, fuse_out;
    std::optional<double> fuse_scale;
    std::vector<int> fuse_size;
    auto* fu = app.add_subcommand("fuse", "fuse one LR-HSI / HR-MSI pair");
    fu->add_option("--checkpoint", fuse_ckpt)->required();
    fu->add_option("--y", fuse_y, "LR hyperspectral input (HST1)")->required();
    fu->add_option("--z", fuse_z, "HR multispectral input (HST1)")->required();
    fu->add_option("--out", fuse_out, "fused output (HST1)")->required();
    auto* scale_opt = fu->add_option("--scale", fuse_scale, "output = round(h*r) x round(w*r)");
    auto* size_opt = fu->add_option("--out-size", fuse_size, "explicit output H W")->expected(2);
    scale_opt->excludes(size_opt);

    std::string ev_pred, ev_gt, ev_csv, ev_dataset;
    double ev_scale = 1.0, ev_peak = 1.0;
    auto* ev = app.add_subcommand("eval", "quality indexes of a prediction against ground truth");
    ev->add_option("--pred", ev_pred)->required();
    ev->add_option("--gt", ev_gt)->required();
    ev->add_option("--scale", ev_scale, "resolution ratio used by ERGAS")->required();
    ev->add_option("--peak", ev_peak, "PSNR/SSIM peak value")->capture_default_str();
    ev->add_option("--csv", ev_csv, "append the row to this CSV");
    ev->add_option("--dataset", ev_dataset, "label for the dataset column");

    std::string ex_ckpt, ex_out;
    auto* ex = app.add_subcommand("export-kernels", "dump MK layer slabs as CSV");
    ex->add_option("--checkpoint", ex_ckpt)->required();
    ex->add_option("--out", ex_out)->required();

    ConfigArgs sw_cfg;
    std::string sw_ckpt, sw_out;
    std::vector<double> sw_scales = {2.0, 3.0, 3.2, 4.0, 5.7};
    int sw_patches = 8;
    auto* sw = app.add_subcommand("sweep", "PSNR vs scale for the model and bicubic on held-out patches");
    add_config_options(sw, sw_cfg);
    sw->add_option("--checkpoint", sw_ckpt)->required();
    sw->add_option("--scales", sw_scales)->delimiter(',')->capture_default_str();
    sw->add_option("--patches", sw_patches)->check(CLI::PositiveNumber)->capture_default_str();
    sw->add_option("--out", sw_out, "CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sim) cmd_simulate(sim_cfg, sim_out, out);
        if (*tr) cmd_train(train_cfg, train_data, train_out, train_resume, stop_after, out);
        if (*fu) cmd_fuse(fuse_ckpt, fuse_y, fuse_z, fuse_out, fuse_scale, fuse_size, out);
        if (*ev) cmd_eval(ev_pred, ev_gt, ev_scale, ev_peak, ev_csv, ev_dataset, out, err);
        if (*ex) cmd_export_kernels(ex_ckpt, ex_out, out);
        if (*sw) cmd_sweep(sw_cfg, sw_ckpt, sw_scales, sw_patches, sw_out, out);
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> storage;
    storage.push_back("ssa");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ssa
