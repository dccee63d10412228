#include "cli.hpp"

#include "verify.hpp"

#include "adiff/errors.hpp"
#include "adiff/kernels.hpp"
#include "adiff/metrics.hpp"
#include "adiff/sampler.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace adiff::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr int kManifestFormat = 1;

// Every flag is kept as its command-line string so the manifest can replay
// the exact configuration. Empty string means "not set".
struct Options {
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;

    const std::string& str(const std::string& name) const { return values.at(name); }
    bool set(const std::string& name) const { return !values.at(name).empty(); }
    bool flag(const std::string& name) const { return flags.at(name); }

    std::size_t count(const std::string& name) const {
        const auto& v = str(name);
        std::size_t pos = 0;
        unsigned long long x = 0;
        try {
            if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
            x = std::stoull(v, &pos);
        } catch (const std::exception&) {
            throw ArgumentError("--" + name + " expects a non-negative integer, got '" + v + "'");
        }
        if (pos != v.size()) throw ArgumentError("--" + name + " expects an integer, got '" + v + "'");
        return std::size_t(x);
    }

    double real(const std::string& name) const {
        const auto& v = str(name);
        std::size_t pos = 0;
        double x = 0.0;
        try {
            x = std::stod(v, &pos);
        } catch (const std::exception&) {
            throw ArgumentError("--" + name + " expects a number, got '" + v + "'");
        }
        if (pos != v.size() || !std::isfinite(x)) {
            throw ArgumentError("--" + name + " expects a number, got '" + v + "'");
        }
        return x;
    }
};

CLI::Option* add_value(CLI::App* app, Options& o, const std::string& name, const std::string& def,
                       const std::string& help) {
    o.values[name] = def;
    return app->add_option("--" + name, o.values[name], help)->capture_default_str();
}

void add_flag(CLI::App* app, Options& o, const std::string& name, const std::string& help) {
    o.flags[name] = false;
    app->add_flag("--" + name, o.flags[name], help);
}

void add_dataset_options(CLI::App* app, Options& o) {
    add_value(app, o, "dataset", "moons", "moons | csv:PATH | idx:PATH[,labels:PATH]");
    add_value(app, o, "moons-n", "2000", "points in the generated moons set")->check(CLI::PositiveNumber);
    add_value(app, o, "moons-noise", "0.05", "moons noise standard deviation")
        ->check(CLI::NonNegativeNumber);
    add_value(app, o, "moons-seed", "0", "seed of the generated moons set")->check(CLI::NonNegativeNumber);
    add_value(app, o, "class-id", "", "restrict to one label (conditional run)");
    add_value(app, o, "seed", "0", "run seed")->check(CLI::NonNegativeNumber);
    add_value(app, o, "threads", "0", "worker thread cap, 0 = hardware")->check(CLI::NonNegativeNumber);
    add_value(app, o, "timesteps", "1000", "diffusion timesteps T")->check(CLI::Range(2, 1000000));
    add_value(app, o, "beta-min", "1e-4", "first beta of the linear schedule")->check(CLI::PositiveNumber);
    add_value(app, o, "beta-max", "0.02", "last beta of the linear schedule")->check(CLI::PositiveNumber);
    add_value(app, o, "steps", "10", "DDIM sampling steps")->check(CLI::Range(1, 100000));
}

void add_selection_options(CLI::App* app, Options& o) {
    const std::string note = " (fraction of N like 0.1, or a count like 500)";
    add_value(app, o, "m-min", "", "smallest candidate pool, default N/10" + note);
    add_value(app, o, "m-max", "", "largest candidate pool, default N/4" + note);
    add_value(app, o, "k-min", "", "smallest golden subset, default N/20" + note);
    add_value(app, o, "k-max", "", "largest golden subset, default N/10" + note);
    add_value(app, o, "proxy-factor", "4", "block-mean pooling factor of the proxy")
        ->check(CLI::PositiveNumber);
}

struct Loaded {
    DatasetStore store;
    std::string spec; // with absolute paths
};

std::string absolute_spec(const std::string& spec) {
    auto abs = [](const std::string& p) { return fs::absolute(p).lexically_normal().string(); };
    if (spec.rfind("csv:", 0) == 0) return "csv:" + abs(spec.substr(4));
    if (spec.rfind("idx:", 0) == 0) {
        const std::string rest = spec.substr(4);
        const auto comma = rest.find(",labels:");
        if (comma == std::string::npos) return "idx:" + abs(rest);
        return "idx:" + abs(rest.substr(0, comma)) + ",labels:" + abs(rest.substr(comma + 8));
    }
    return spec;
}

Loaded load_dataset(Options& o) {
    const std::string spec = absolute_spec(o.str("dataset"));
    o.values["dataset"] = spec;
    std::optional<DatasetStore> store;
    if (spec == "moons") {
        store = make_moons(o.count("moons-n"), o.real("moons-noise"), o.count("moons-seed"));
    } else if (spec.rfind("csv:", 0) == 0) {
        store = load_points_csv(spec.substr(4));
    } else if (spec.rfind("idx:", 0) == 0) {
        const std::string rest = spec.substr(4);
        const auto comma = rest.find(",labels:");
        if (comma == std::string::npos) {
            store = load_idx(rest);
        } else {
            store = load_idx(rest.substr(0, comma), fs::path(rest.substr(comma + 8)));
        }
    } else {
        throw ArgumentError("unknown dataset '" + spec + "' (expected moons, csv:PATH or idx:PATH)");
    }
    if (o.set("class-id")) {
        const std::size_t label = o.count("class-id");
        store = store->restrict_to_class(int(label));
    }
    return {std::move(*store), spec};
}

DiffusionSchedule make_schedule(const Options& o) {
    return DiffusionSchedule::linear_beta(o.count("timesteps"), o.real("beta-min"), o.real("beta-max"),
                                          o.count("steps"));
}

std::size_t count_or_fraction(const Options& o, const std::string& name, std::size_t n) {
    const auto& v = o.str(name);
    if (v.find_first_of(".eE") != std::string::npos) {
        const double f = o.real(name);
        if (!(f > 0.0 && f <= 1.0)) throw ArgumentError("--" + name + " fraction must lie in (0, 1]");
        return std::max<std::size_t>(1, std::size_t(std::floor(f * double(n))));
    }
    return o.count(name);
}

ScheduleParams resolve_params(const Options& o, std::size_t n) {
    ScheduleParams p = ScheduleParams::defaults(n);
    if (o.set("m-min")) p.m_min = count_or_fraction(o, "m-min", n);
    if (o.set("m-max")) p.m_max = count_or_fraction(o, "m-max", n);
    if (o.set("k-min")) p.k_min = count_or_fraction(o, "k-min", n);
    if (o.set("k-max")) p.k_max = count_or_fraction(o, "k-max", n);
    p.validate(n);
    return p;
}

json params_json(const ScheduleParams& p) {
    return {{"m_min", p.m_min}, {"m_max", p.m_max}, {"k_min", p.k_min}, {"k_max", p.k_max}};
}

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& name) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size() || v == 0) {
            throw ArgumentError("--" + name + " expects positive integers, got '" + item + "'");
        }
        out.push_back(std::size_t(v));
    }
    if (out.empty()) throw ArgumentError("--" + name + " is empty");
    return out;
}

std::vector<SamplerMode> parse_modes(const std::string& text) {
    std::vector<SamplerMode> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_sampler_mode(item));
    if (out.empty()) throw ArgumentError("--modes is empty");
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string numbered(const std::string& stem, std::size_t i, const std::string& ext, int width = 3) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%0*zu", width, i);
    return stem + buf + ext;
}

void write_pgm(std::span<const double> pixels, const ImageShape& shape, const fs::path& path) {
    if (shape.channels != 1) throw PreconditionError("PGM output needs single-channel images");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << shape.width << ' ' << shape.height << "\n255\n";
    std::vector<unsigned char> bytes(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = std::lround((pixels[i] + 1.0) * 127.5);
        bytes[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// Output directory plus the bookkeeping that ends up in the manifest.
class Run {
public:
    Run(std::string command, Options& opts, const fs::path& out)
        : command_(std::move(command)), opts_(opts), out_(out), started_(utc_now()),
          t0_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_);
    }

    fs::path artifact(const std::string& rel) {
        artifacts_.insert(rel);
        const fs::path p = out_ / rel;
        fs::create_directories(p.parent_path());
        return p;
    }

    json& resolved() { return resolved_; }

    void write_manifest(const Loaded* data) {
        json m;
        m["format"] = kManifestFormat;
        m["command"] = command_;
        json cfg = json::object();
        for (const auto& [k, v] : opts_.values) cfg[k] = v;
        for (const auto& [k, v] : opts_.flags) cfg[k] = v;
        m["config"] = cfg;
        m["resolved"] = resolved_;
        if (data) {
            m["dataset"] = {{"spec", data->spec},
                            {"n", data->store.size()},
                            {"dim", data->store.dim()},
                            {"fingerprint", hex64(data->store.fingerprint())}};
        }
        if (opts_.values.count("seed")) m["seed"] = opts_.count("seed");
        m["artifacts"] = std::vector<std::string>(artifacts_.begin(), artifacts_.end());
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
        m["wall_clock"] = {{"started_utc", started_}, {"elapsed_ms", ms}};
        std::ofstream out(out_ / kManifestName);
        if (!out) throw IoError("cannot write manifest in " + out_.string());
        out << m.dump(2) << '\n';
    }

private:
    std::string command_;
    Options& opts_;
    fs::path out_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
    std::set<std::string> artifacts_;
    json resolved_ = json::object();
};

void apply_threads(const Options& o) { set_thread_count(o.count("threads")); }

int cmd_sample(Options& o, const fs::path& out) {
    apply_threads(o);
    Run run("sample", o, out);
    Loaded data = load_dataset(o);
    DatasetStore& store = data.store;
    const auto schedule = make_schedule(o);
    const auto params = resolve_params(o, store.size());

    SamplerConfig cfg;
    cfg.n_steps = o.count("steps");
    cfg.eta = o.real("eta");
    cfg.mode = parse_sampler_mode(o.str("mode"));
    cfg.schedule_params = params;
    cfg.audit_every = o.count("audit-every");
    const std::string audit_mode = o.str("audit-mode");
    if (audit_mode != "full" && audit_mode != "candidate") {
        throw ArgumentError("--audit-mode must be full or candidate");
    }
    cfg.audit_mode = audit_mode == "full" ? AuditMode::full_audit : AuditMode::candidate_audit;
    cfg.rng_seed = o.count("seed");
    cfg.wss_batch = o.count("wss-batch");
    cfg.timing = o.flag("timing");
    cfg.record_states = o.flag("snapshots");
    if (cfg.mode == SamplerMode::golden) attach_proxy(store, o.count("proxy-factor"));
    if (cfg.mode == SamplerMode::golden) params.validate(store.size(), schedule);

    const std::size_t count = o.count("n");
    if (count == 0) throw ArgumentError("--n must be positive");
    const auto trajs = sample_batch(store, schedule, cfg, count);

    run.resolved() = {{"n_total", store.size()},
                      {"dim", store.dim()},
                      {"proxy_dim", store.proxy() ? store.proxy()->dim : store.dim()},
                      {"schedule_params", params_json(params)},
                      {"ddim_steps", schedule.ddim_steps()}};

    std::vector<std::vector<double>> finals;
    for (const auto& t : trajs) finals.push_back(t.x0);
    const bool images = store.shape().has_value();
    if (images) {
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            write_pgm(trajs[i].x0, *store.shape(), run.artifact(numbered("samples/sample", i, ".pgm")));
        }
    } else {
        write_points_csv(finals, run.artifact("samples.csv"));
    }

    std::size_t violations = 0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        write_trajectory_csv(trajs[i], run.artifact(numbered("trajectories/trajectory", i, ".csv")),
                             cfg.timing);
        if (cfg.mode == SamplerMode::golden) {
            write_selection_csv(trajs[i], run.artifact(numbered("selection/selection", i, ".csv")));
        }
        if (cfg.audit_every > 0 && cfg.mode == SamplerMode::golden) {
            write_audit_csv(trajs[i], run.artifact(numbered("audit/audit", i, ".csv")));
            for (const auto& s : trajs[i].steps) {
                if (s.audit && !s.audit->chain_holds()) ++violations;
            }
        }
    }
    if (cfg.record_states) {
        for (std::size_t s = 0; s < schedule.ddim_steps().size(); ++s) {
            if (images) {
                write_pgm(trajs[0].steps[s].x0_hat, *store.shape(),
                          run.artifact(numbered("snapshots/x0_step", s, ".pgm", 2)));
            } else {
                std::vector<std::vector<double>> pts;
                for (const auto& t : trajs) pts.push_back(t.steps[s].x0_hat);
                write_points_csv(pts, run.artifact(numbered("snapshots/x0_step", s, ".csv", 2)));
            }
        }
    }
    schedule.write_csv(run.artifact("schedule.csv"));
    run.write_manifest(&data);

    std::cout << "sampled " << count << " trajectories (" << to_string(cfg.mode) << ", N=" << store.size()
              << ", D=" << store.dim() << ") into " << out.string() << '\n';
    if (cfg.summarize) {
        const auto med = median_effective_support(trajs);
        std::cout << "median effective support per step:";
        for (double v : med) std::cout << ' ' << v;
        std::cout << '\n';
    }
    if (violations > 0) {
        std::cerr << "error: bound chain violated at " << violations << " audited steps\n";
        return kExitFailure;
    }
    return kExitOk;
}

int cmd_analyze(Options& o, const fs::path& out) {
    apply_threads(o);
    Run run("analyze", o, out);
    Loaded data = load_dataset(o);
    DatasetStore& store = data.store;
    const auto schedule = make_schedule(o);
    const auto params = resolve_params(o, store.size());
    const std::size_t n = store.size();

    SamplerConfig cfg;
    cfg.n_steps = o.count("steps");
    cfg.mode = parse_sampler_mode(o.str("mode"));
    cfg.schedule_params = params;
    cfg.rng_seed = o.count("seed");
    cfg.record_states = false;
    cfg.timing = false;
    if (cfg.mode == SamplerMode::golden) attach_proxy(store, o.count("proxy-factor"));
    const std::size_t count = o.count("n");
    if (count == 0) throw ArgumentError("--n must be positive");
    const auto trajs = sample_batch(store, schedule, cfg, count);

    const auto& stride = schedule.ddim_steps();
    {
        std::ofstream csv(run.artifact("entropy.csv"));
        if (!csv) throw IoError("cannot write entropy.csv");
        csv.precision(17);
        csv << "step,t,sigma_sq,median_entropy,median_eff_support,min_eff_support,max_eff_support\n";
        for (std::size_t s = 0; s < stride.size(); ++s) {
            std::vector<double> ent, eff;
            for (const auto& t : trajs) {
                ent.push_back(t.steps[s].weights->entropy);
                eff.push_back(t.steps[s].weights->effective_support);
            }
            std::sort(ent.begin(), ent.end());
            std::sort(eff.begin(), eff.end());
            auto median = [](const std::vector<double>& v) {
                const std::size_t h = v.size() / 2;
                return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
            };
            csv << s << ',' << stride[s] << ',' << schedule.sigma_sq(stride[s]) << ',' << median(ent)
                << ',' << median(eff) << ',' << eff.front() << ',' << eff.back() << '\n';
        }
    }

    const auto sizes = parse_size_list(o.str("subset-sizes"), "subset-sizes");
    for (std::size_t s : sizes) {
        if (s > n) std::cerr << "warning: subset size " << s << " exceeds N=" << n << ", clamped\n";
    }
    const std::size_t probes = o.count("queries");
    if (probes == 0) throw ArgumentError("--queries must be positive");
    {
        std::ofstream csv(run.artifact("sensitivity.csv"));
        if (!csv) throw IoError("cannot write sensitivity.csv");
        csv.precision(17);
        csv << "step,t,sigma_sq,subset_size,mse,queries\n";
        const CounterRng root(cfg.rng_seed);
        for (std::size_t s = 0; s < stride.size(); ++s) {
            const std::uint64_t step_seed = root.split(s).next_u64();
            const auto pts = subset_sensitivity(store, schedule.level(stride[s]), sizes, probes, step_seed);
            for (const auto& p : pts) {
                csv << s << ',' << stride[s] << ',' << schedule.sigma_sq(stride[s]) << ',' << p.size << ','
                    << p.mse << ',' << probes << '\n';
            }
        }
    }
    schedule.write_csv(run.artifact("schedule.csv"));
    run.resolved() = {{"n_total", n}, {"schedule_params", params_json(params)}, {"subset_sizes", sizes}};
    run.write_manifest(&data);
    std::cout << "wrote entropy.csv and sensitivity.csv to " << out.string() << '\n';
    return kExitOk;
}

int cmd_bench(Options& o, const fs::path& out) {
    apply_threads(o);
    Run run("bench", o, out);
    Loaded data = load_dataset(o);
    DatasetStore& store = data.store;
    const auto schedule = make_schedule(o);
    const auto params = resolve_params(o, store.size());
    const auto modes = parse_modes(o.str("modes"));

    TimingConfig tc;
    tc.warmup = o.count("warmup");
    tc.repeats = o.count("repeats");
    tc.seed = o.count("seed");
    tc.wss_batch = o.count("wss-batch");
    tc.schedule_params = params;
    if (o.set("stride-index")) tc.stride_index = o.count("stride-index");
    if (tc.repeats == 0) throw ArgumentError("--repeats must be positive");
    if (tc.repeats == 1) std::cerr << "warning: a single timed repeat gives unstable timings\n";
    if (std::find(modes.begin(), modes.end(), SamplerMode::golden) != modes.end()) {
        attach_proxy(store, o.count("proxy-factor"));
    }

    std::vector<PerfReport> rows;
    for (auto m : modes) rows.push_back(time_denoise_step(store, schedule, m, tc));
    write_bench_csv(rows, run.artifact("bench.csv"));
    run.resolved() = {{"n_total", store.size()},
                      {"schedule_params", params_json(params)},
                      {"threads", thread_count()}};
    run.write_manifest(&data);

    std::cout << "mode     N        D      d      m_t      median_ms     flops\n";
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof line, "%-8s %-8zu %-6zu %-6zu %-8zu %-13.4f %llu\n",
                      to_string(r.mode).c_str(), r.n, r.dim, r.proxy_dim, r.m_t, r.median_step_ms,
                      static_cast<unsigned long long>(r.flops));
        std::cout << line;
    }
    return kExitOk;
}

json failure_record(const Options& o, const VerifyConfig& cfg, const InstanceResult& r) {
    return {{"suite", r.suite},
            {"instance", r.instance},
            {"seed", cfg.seed},
            {"inject_fault", cfg.inject_fault},
            {"dataset", o.values},
            {"details", r.details}};
}

int cmd_verify(Options& o, const std::string& out_dir) {
    apply_threads(o);
    VerifyConfig cfg;
    if (o.set("replay")) {
        std::ifstream in(o.str("replay"));
        if (!in) throw IoError("cannot open " + o.str("replay"));
        const json rec = json::parse(in);
        for (const auto& [k, v] : rec.at("dataset").items()) o.values[k] = v.get<std::string>();
        o.values["seed"] = std::to_string(rec.at("seed").get<std::uint64_t>());
        o.values["suite"] = rec.at("suite").get<std::string>();
        o.values["instance"] = std::to_string(rec.at("instance").get<std::size_t>());
        o.flags["inject-fault"] = rec.at("inject_fault").get<bool>();
        o.values["replay"] = "";
    }
    cfg.seed = o.count("seed");
    cfg.instances = o.count("instances");
    cfg.inject_fault = o.flag("inject-fault");
    if (o.set("suite")) cfg.suite = o.str("suite");
    if (o.set("instance")) {
        cfg.instance = o.count("instance");
        cfg.instances = std::max(cfg.instances, *cfg.instance + 1);
    }

    std::optional<Run> run;
    if (!out_dir.empty()) run.emplace("verify", o, out_dir);
    Loaded data = load_dataset(o);
    // The regime thresholds were calibrated on the moons geometry only.
    cfg.regime_thresholds = data.spec == "moons";
    attach_proxy(data.store, o.count("proxy-factor"));
    const auto schedule = make_schedule(o);
    const auto results = run_verify(data.store, schedule, cfg);

    bool ok = true;
    std::cout << "suite         instances  failed  status\n";
    for (const auto& s : results) {
        char line[96];
        std::snprintf(line, sizeof line, "%-13s %-10zu %-7zu %s\n", s.suite.c_str(), s.run, s.failed,
                      s.failed ? "FAIL" : "PASS");
        std::cout << line;
        ok = ok && s.failed == 0;
    }
    std::vector<json> failures;
    for (const auto& s : results) {
        if (s.first_failure) failures.push_back(failure_record(o, cfg, *s.first_failure));
    }
    for (const auto& f : failures) {
        std::cerr << "failing instance: " << f.dump() << '\n';
        std::cerr << "replay: adiff verify --seed " << cfg.seed << " --suite " << f["suite"].get<std::string>()
                  << " --instance " << f["instance"].get<std::size_t>()
                  << (cfg.inject_fault ? " --inject-fault" : "") << '\n';
    }
    if (run) {
        {
            std::ofstream csv(run->artifact("verify.csv"));
            if (!csv) throw IoError("cannot write verify.csv");
            csv << "suite,instances,failed\n";
            for (const auto& s : results) csv << s.suite << ',' << s.run << ',' << s.failed << '\n';
        }
        if (!failures.empty()) {
            std::ofstream f(run->artifact("failure.json"));
            f << json(failures.front()).dump(2) << '\n';
            std::ofstream all(run->artifact("failures.json"));
            all << json(failures).dump(2) << '\n';
        }
        run->resolved() = {{"regime_thresholds", cfg.regime_thresholds}, {"instances", cfg.instances}};
        run->write_manifest(&data);
    }
    return ok ? kExitOk : kExitFailure;
}

std::vector<std::string> manifest_args(const json& m, const std::string& out) {
    std::vector<std::string> args{m.at("command").get<std::string>()};
    for (const auto& [k, v] : m.at("config").items()) {
        if (k == "out") continue;
        if (v.is_boolean()) {
            if (v.get<bool>()) args.push_back("--" + k);
        } else {
            const auto s = v.get<std::string>();
            if (!s.empty()) {
                args.push_back("--" + k);
                args.push_back(s);
            }
        }
    }
    args.push_back("--out");
    args.push_back(out);
    return args;
}

} // namespace

int run(const std::vector<std::string>& args) {
    std::vector<std::string> full{"adiff"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : full) argv.push_back(a.data());
    return run(int(argv.size()), argv.data());
}

int run(int argc, char** argv) {
    CLI::App app{"Closed-form diffusion sampling over a training set"};
    app.name("adiff");
    app.require_subcommand(1);

    Options sample_o, analyze_o, bench_o, verify_o;
    std::string sample_out, analyze_out, bench_out, verify_out, rerun_out, rerun_manifest;

    auto* sample = app.add_subcommand("sample", "run the sampler and write samples and trajectory CSVs");
    add_dataset_options(sample, sample_o);
    add_selection_options(sample, sample_o);
    add_value(sample, sample_o, "mode", "golden", "golden | full | wss");
    add_value(sample, sample_o, "n", "16", "number of trajectories");
    add_value(sample, sample_o, "eta", "0", "DDIM stochasticity in [0, 1]")->check(CLI::Range(0.0, 1.0));
    add_value(sample, sample_o, "audit-every", "0", "audit every A-th step, 0 = off");
    add_value(sample, sample_o, "audit-mode", "full", "full | candidate");
    add_value(sample, sample_o, "wss-batch", "1024", "batch size of the wss mode")->check(CLI::PositiveNumber);
    add_flag(sample, sample_o, "timing", "record per-step wall-clock times");
    add_flag(sample, sample_o, "snapshots", "write per-step x0 estimates");
    sample->add_option("--out", sample_out, "output directory")->required();

    auto* analyze = app.add_subcommand("analyze", "entropy and subset-size sweeps");
    add_dataset_options(analyze, analyze_o);
    add_selection_options(analyze, analyze_o);
    add_value(analyze, analyze_o, "mode", "golden", "sampler mode of the entropy sweep");
    add_value(analyze, analyze_o, "n", "32", "trajectories in the entropy sweep");
    add_value(analyze, analyze_o, "subset-sizes", "10,100,1000,5000", "random subset sizes");
    add_value(analyze, analyze_o, "queries", "64", "noisy probes per step");
    analyze->add_option("--out", analyze_out, "output directory")->required();

    auto* bench = app.add_subcommand("bench", "time one denoising step per mode");
    add_dataset_options(bench, bench_o);
    add_selection_options(bench, bench_o);
    add_value(bench, bench_o, "modes", "golden,full", "comma-separated modes");
    add_value(bench, bench_o, "repeats", "10", "timed repeats");
    add_value(bench, bench_o, "warmup", "3", "untimed warmup repeats");
    add_value(bench, bench_o, "stride-index", "", "stride position to time, default the middle");
    add_value(bench, bench_o, "wss-batch", "1024", "batch size of the wss mode")->check(CLI::PositiveNumber);
    bench->add_option("--out", bench_out, "output directory")->required();

    auto* verify = app.add_subcommand("verify", "randomized bound, regime and streaming property suites");
    add_dataset_options(verify, verify_o);
    add_value(verify, verify_o, "proxy-factor", "4", "block-mean pooling factor of the proxy");
    add_value(verify, verify_o, "instances", "100", "instances per suite");
    add_value(verify, verify_o, "suite", "", "run one suite only");
    add_value(verify, verify_o, "instance", "", "run one instance only");
    add_value(verify, verify_o, "replay", "", "replay a serialized failure (failure.json)");
    add_flag(verify, verify_o, "inject-fault", "skip softmax renormalization (mutation check)");
    verify->add_option("--out", verify_out, "optional output directory");

    auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest");
    rerun->add_option("manifest", rerun_manifest, "manifest.json of a previous run")->required();
    rerun->add_option("--out", rerun_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sample) {
            if (sample_o.count("steps") == 0) throw ArgumentError("--steps must be positive");
            return cmd_sample(sample_o, sample_out);
        }
        if (*analyze) return cmd_analyze(analyze_o, analyze_out);
        if (*bench) return cmd_bench(bench_o, bench_out);
        if (*verify) return cmd_verify(verify_o, verify_out);
        if (*rerun) {
            std::ifstream in(rerun_manifest);
            if (!in) throw IoError("cannot open " + rerun_manifest);
            json m;
            try {
                m = json::parse(in);
            } catch (const json::exception& e) {
                throw FormatError(std::string("bad manifest: ") + e.what());
            }
            if (m.value("format", 0) != kManifestFormat) throw FormatError("unsupported manifest format");
            return run(manifest_args(m, rerun_out));
        }
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace adiff::cli
