#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "vfcn/model.hpp"
#include "vfcn/pgm.hpp"

namespace vfcn::cli {
namespace {

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string normalize_key(std::string key)
{
    std::replace(key.begin(), key.end(), '-', '_');
    return key;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected)
{
    throw ContractError("setting '" + key + "': '" + value + "' is not " + expected);
}

long to_long(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long x = std::stol(v, &used);
        if (used == v.size())
            return x;
    } catch (const std::exception&) {
    }
    bad_value(key, v, "an integer");
}

int to_int(const std::string& key, const std::string& v)
{
    const long x = to_long(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        bad_value(key, v, "an int");
    return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] != '-') {
            const unsigned long long x = std::stoull(v, &used);
            if (used == v.size())
                return x;
        }
    } catch (const std::exception&) {
    }
    bad_value(key, v, "a non-negative integer");
}

double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size() && std::isfinite(x))
            return x;
    } catch (const std::exception&) {
    }
    bad_value(key, v, "a finite number");
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    bad_value(key, v, "a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v)
{
    std::vector<int> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ','))
        if (!trim(item).empty())
            out.push_back(to_int(key, trim(item)));
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters()
{
    static const std::map<std::string, Setter> table = {
        {"manifest", [](RunConfig& c, auto&, auto& v) { c.manifest = v; }},
        {"arch", [](RunConfig& c, auto&, auto& v) { c.arch = v; }},
        {"weights", [](RunConfig& c, auto&, auto& v) { c.weights = v; }},
        {"source_weights", [](RunConfig& c, auto&, auto& v) { c.source_weights = v; }},
        {"predictions", [](RunConfig& c, auto&, auto& v) { c.predictions = v; }},
        {"out", [](RunConfig& c, auto&, auto& v) { c.out = v; }},
        {"seed",
         [](RunConfig& c, auto& k, auto& v) {
             c.train.seed = to_u64(k, v);
             c.phantom.seed = c.train.seed;
         }},
        {"workers", [](RunConfig& c, auto& k, auto& v) { c.workers = to_int(k, v); }},
        {"k_classes", [](RunConfig& c, auto& k, auto& v) { c.train.num_classes = to_int(k, v); }},
        {"structure", [](RunConfig& c, auto&, auto& v) { c.data.target = parse_target(v); }},
        {"augmentation", [](RunConfig& c, auto&, auto& v) { c.data.augmentation = AugmentationConfig::preset(v); }},
        {"crop_dims", [](RunConfig& c, auto& k, auto& v) { c.data.augmentation.crop_dims = to_int_list(k, v); }},
        {"crop_fraction", [](RunConfig& c, auto& k, auto& v) { c.data.augmentation.crop_fraction = to_double(k, v); }},
        {"rotations", [](RunConfig& c, auto& k, auto& v) { c.data.augmentation.rotations = to_int_list(k, v); }},
        {"vflip", [](RunConfig& c, auto& k, auto& v) { c.data.augmentation.vflip = to_bool(k, v); }},
        {"hflip", [](RunConfig& c, auto& k, auto& v) { c.data.augmentation.hflip = to_bool(k, v); }},
        {"base_lr", [](RunConfig& c, auto& k, auto& v) { c.train.base_lr = to_double(k, v); }},
        {"power", [](RunConfig& c, auto& k, auto& v) { c.train.power = to_double(k, v); }},
        {"momentum", [](RunConfig& c, auto& k, auto& v) { c.train.momentum = to_double(k, v); }},
        {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
        {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_int(k, v); }},
        {"max_iter", [](RunConfig& c, auto& k, auto& v) { c.train.max_iter = to_long(k, v); }},
        {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_int(k, v); }},
        {"dev_fraction", [](RunConfig& c, auto& k, auto& v) { c.dev_fraction = to_double(k, v); }},
        {"log_every", [](RunConfig& c, auto& k, auto& v) { c.log_every = to_int(k, v); }},
        {"apd_mode",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "symmetric")
                 c.apd_mode = metrics::ApdMode::Symmetric;
             else if (v == "directed")
                 c.apd_mode = metrics::ApdMode::Directed;
             else
                 bad_value(k, v, "symmetric or directed");
         }},
        {"family", [](RunConfig& c, auto&, auto& v) { c.phantom.family = parse_phantom_family(v); }},
        {"count", [](RunConfig& c, auto& k, auto& v) { c.phantom.count = to_int(k, v); }},
        {"size", [](RunConfig& c, auto& k, auto& v) { c.phantom.size = to_int(k, v); }},
        {"center_jitter", [](RunConfig& c, auto& k, auto& v) { c.phantom.center_jitter = to_double(k, v); }},
        {"endo_radius_min", [](RunConfig& c, auto& k, auto& v) { c.phantom.endo_radius_min = to_double(k, v); }},
        {"endo_radius_max", [](RunConfig& c, auto& k, auto& v) { c.phantom.endo_radius_max = to_double(k, v); }},
        {"thickness_min", [](RunConfig& c, auto& k, auto& v) { c.phantom.thickness_min = to_double(k, v); }},
        {"thickness_max", [](RunConfig& c, auto& k, auto& v) { c.phantom.thickness_max = to_double(k, v); }},
        {"background", [](RunConfig& c, auto& k, auto& v) { c.phantom.background = to_double(k, v); }},
        {"myocardium", [](RunConfig& c, auto& k, auto& v) { c.phantom.myocardium = to_double(k, v); }},
        {"blood_pool", [](RunConfig& c, auto& k, auto& v) { c.phantom.blood_pool = to_double(k, v); }},
        {"noise_sd", [](RunConfig& c, auto& k, auto& v) { c.phantom.noise_sd = to_double(k, v); }},
        {"pixel_spacing",
         [](RunConfig& c, auto& k, auto& v) {
             const auto sep = v.find_first_of(",\\");
             if (sep == std::string::npos)
                 bad_value(k, v, "a 'row,col' pair");
             c.phantom.spacing = {to_double(k, trim(v.substr(0, sep))), to_double(k, trim(v.substr(sep + 1)))};
         }},
    };
    return table;
}

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads, rethrowing the
/// first failure by index.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn)
{
    const std::size_t threads = std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(n, 1));
    std::vector<std::exception_ptr> errors(n);
    auto body = [&](std::size_t t) {
        for (std::size_t i = t; i < n; i += threads) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        body(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(body, t);
        for (auto& th : pool)
            th.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

void require_file(const std::optional<std::filesystem::path>& p, const char* what)
{
    if (!p)
        throw ContractError(std::string("missing required --") + what);
    if (!std::filesystem::is_regular_file(*p))
        throw ContractError(std::string(what) + " not found: " + p->string());
}

std::filesystem::path require_out(const RunConfig& cfg)
{
    if (!cfg.out)
        throw ContractError("missing required --out");
    if (std::filesystem::exists(*cfg.out) && !std::filesystem::is_directory(*cfg.out))
        throw ContractError("--out must be a directory: " + cfg.out->string());
    return *cfg.out;
}

std::vector<ManifestRow> validated_manifest(const RunConfig& cfg)
{
    require_file(cfg.manifest, "manifest");
    auto rows = parse_manifest(*cfg.manifest);
    for (const auto& r : rows) {
        for (const auto* p : {&r.image, r.contour_endo ? &*r.contour_endo : nullptr,
                              r.contour_epi ? &*r.contour_epi : nullptr})
            if (p && !std::filesystem::is_regular_file(*p))
                throw ContractError("manifest row '" + r.id + "': file not found: " + p->string());
    }
    return rows;
}

NetworkSpec resolve_spec(const RunConfig& cfg)
{
    if (cfg.arch && !std::filesystem::is_regular_file(*cfg.arch))
        throw ContractError("arch not found: " + cfg.arch->string());
    const int k = cfg.train.num_classes;
    return cfg.arch ? load_spec_file(*cfg.arch, k, 1) : default_spec(k, 1);
}

std::vector<RawCase> load_cases(const std::vector<ManifestRow>& rows, int workers)
{
    std::vector<RawCase> cases(rows.size());
    parallel_for(rows.size(), workers, [&](std::size_t i) { cases[i] = load_case(rows[i]); });
    return cases;
}

/// Validation stage: any exception maps to exit code 1.
template <typename Fn>
bool validate_stage(std::ostream& err, Fn fn)
{
    try {
        fn();
        return true;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return false;
    }
}

template <typename Fn>
int runtime_stage(std::ostream& err, Fn fn)
{
    try {
        fn();
        return kSuccess;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

int train_common(const RunConfig& cfg, bool fine_tuning, std::ostream& out, std::ostream& err)
{
    std::vector<ManifestRow> rows;
    NetworkSpec spec;
    std::filesystem::path out_dir, weights_path;
    TrainConfig tcfg = cfg.train;
    tcfg.fine_tune = fine_tuning;
    const bool ok = validate_stage(err, [&] {
        rows = validated_manifest(cfg);
        out_dir = require_out(cfg);
        if (fine_tuning) {
            require_file(cfg.source_weights, "source-weights");
            read_weights(*cfg.source_weights);
        }
        spec = resolve_spec(cfg);
        tcfg.validate();
        if (!(cfg.dev_fraction >= 0 && cfg.dev_fraction < 1))
            throw ContractError("dev_fraction must lie in [0, 1)");
        weights_path = cfg.weights.value_or(out_dir / "weights.fcnw");
    });
    if (!ok)
        return kValidationError;

    return runtime_stage(err, [&] {
        const auto cases = load_cases(rows, cfg.workers);
        // Hold out whole cases (before augmentation) for the development split.
        std::vector<std::size_t> idx(cases.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng split_rng(tcfg.seed);
        split_rng.shuffle(idx);
        std::size_t n_dev = static_cast<std::size_t>(std::ceil(cfg.dev_fraction * static_cast<double>(cases.size())));
        if (n_dev >= cases.size())
            n_dev = cases.size() > 1 ? cases.size() - 1 : 0;
        std::vector<std::size_t> dev_idx(idx.begin(), idx.begin() + static_cast<long>(n_dev));
        std::vector<std::size_t> train_idx(idx.begin() + static_cast<long>(n_dev), idx.end());
        std::sort(dev_idx.begin(), dev_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        std::vector<RawCase> train_cases, dev_cases;
        for (auto i : train_idx)
            train_cases.push_back(cases[i]);
        for (auto i : dev_idx)
            dev_cases.push_back(cases[i]);

        DatasetConfig dcfg = cfg.data;
        dcfg.workers = cfg.workers;
        dcfg.train = true;
        Dataset train_set = build_dataset(train_cases, dcfg);
        dcfg.train = false;
        Dataset dev_set = build_dataset(dev_cases.empty() ? train_cases : dev_cases, dcfg);
        for (const auto& w : train_set.warnings)
            err << "warning: " << w << '\n';
        if (train_set.samples.empty())
            throw ContractError("no labeled training samples");
        const char* dev_label = dev_cases.empty() ? "training" : "dev";
        out << "training on " << train_set.samples.size() << " samples (" << train_cases.size()
            << " cases), " << dev_label << " split " << dev_set.samples.size() << " cases\n";

        TrainHooks hooks;
        hooks.dev = dev_set.samples;
        hooks.observer = [&](const IterationRecord& r, const WeightStore&) {
            if (cfg.log_every > 0 && (r.iter == 1 || r.iter % cfg.log_every == 0))
                out << "iter " << r.iter << " lr " << r.lr << " loss " << r.loss << '\n' << std::flush;
            return false;
        };
        TrainResult result = fine_tuning
                                 ? fine_tune(spec, *cfg.source_weights, train_set.samples, tcfg, hooks)
                                 : train(spec, init_xavier(spec, tcfg.seed), train_set.samples, tcfg, hooks);
        for (const auto& w : result.report.warnings)
            err << "warning: " << w << '\n';
        if (fine_tuning) {
            out << "transplanted " << result.report.transplanted.size() << " layers:";
            for (const auto& n : result.report.transplanted)
                out << ' ' << n;
            out << '\n';
        }
        std::filesystem::create_directories(out_dir);
        save_weights(result.weights, weights_path);
        write_report_csv(result.report, out_dir / "train_report.csv");
        const auto dice = result.report.epochs.empty() ? std::nullopt : result.report.epochs.back().dev_dice;
        out << "weights: " << weights_path.string() << '\n';
        if (dice)
            out << "final " << dev_label << " Dice: " << std::fixed << std::setprecision(4) << *dice << '\n';
        else
            out << "final " << dev_label << " Dice: NA\n";
    });
}

std::vector<std::pair<std::string, LabelMask>> structure_masks(const LabelMask& labels, Target target)
{
    switch (target) {
    case Target::Endo: return {{"endo", metrics::select_label(labels, 1, true)}};
    case Target::Epi: return {{"epi", metrics::select_label(labels, 1, true)}};
    case Target::Both:
        return {{"endo", metrics::select_label(labels, 2)}, {"epi", metrics::select_label(labels, 1, true)}};
    }
    return {};
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ','))
        cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

constexpr std::string_view kPredictionsHeader = "id,structure,mask,contour";

struct PredictionRow {
    std::string id;
    std::string structure;
    std::filesystem::path mask;
    std::optional<std::filesystem::path> contour;
};

std::vector<PredictionRow> parse_predictions(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open predictions " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != kPredictionsHeader)
        throw FormatError("predictions " + path.string() + ": header must be '" + std::string(kPredictionsHeader) +
                          "'");
    const auto base = path.parent_path();
    std::vector<PredictionRow> rows;
    std::set<std::pair<std::string, std::string>> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split_csv(trim(line));
        if (cells.size() != 4 || cells[0].empty() || cells[1].empty() || cells[2].empty())
            throw FormatError("predictions line " + std::to_string(line_no) + ": expected id,structure,mask,contour");
        if (cells[1] != "endo" && cells[1] != "epi")
            throw FormatError("predictions line " + std::to_string(line_no) + ": structure must be endo or epi");
        if (!seen.insert({cells[0], cells[1]}).second)
            throw FormatError("predictions line " + std::to_string(line_no) + ": duplicate " + cells[0] + "/" +
                              cells[1]);
        PredictionRow r{cells[0], cells[1], base / cells[2], std::nullopt};
        if (!cells[3].empty())
            r.contour = base / cells[3];
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace

Settings parse_settings(const std::string& text)
{
    Settings s;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = normalize_key(trim(line.substr(0, eq)));
        if (key.empty())
            throw ContractError("config line " + std::to_string(line_no) + ": empty key");
        s[key] = trim(line.substr(eq + 1));
    }
    return s;
}

Settings read_settings_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ContractError("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_settings(buf.str());
}

RunConfig make_run_config(const std::string& verb, const Settings& settings)
{
    RunConfig cfg;
    cfg.verb = verb;
    cfg.train.fine_tune = verb == "finetune";
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    std::optional<int> k;
    // Structure first: it decides the class count the other keys are checked against.
    if (auto it = settings.find("structure"); it != settings.end())
        cfg.data.target = parse_target(it->second);
    cfg.train.num_classes = target_classes(cfg.data.target);
    for (const auto& [key, value] : settings) {
        const auto it = setters().find(key);
        if (it == setters().end())
            throw ContractError("unknown setting '" + key + "'");
        if (key == "k_classes") {
            k = to_int(key, value);
            continue;
        }
        it->second(cfg, key, value);
    }
    cfg.train.num_classes = target_classes(cfg.data.target);
    if (k && *k != cfg.train.num_classes)
        throw ContractError("--k-classes " + std::to_string(*k) + " does not match structure '" +
                            std::string(to_string(cfg.data.target)) + "' (" +
                            std::to_string(cfg.train.num_classes) + " classes)");
    if (cfg.workers < 1)
        throw ContractError("workers must be at least 1");
    return cfg;
}

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    return train_common(cfg, false, out, err);
}

int run_finetune(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    return train_common(cfg, true, out, err);
}

int run_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    std::vector<ManifestRow> rows;
    NetworkSpec spec;
    WeightStore weights;
    std::filesystem::path out_dir;
    const bool ok = validate_stage(err, [&] {
        rows = validated_manifest(cfg);
        out_dir = require_out(cfg);
        require_file(cfg.weights, "weights");
        spec = resolve_spec(cfg);
        weights = load_weights(*cfg.weights, spec, true).store;
    });
    if (!ok)
        return kValidationError;

    return runtime_stage(err, [&] {
        std::filesystem::create_directories(out_dir);
        struct Output {
            std::vector<PredictionRow> rows;
            std::string log;
        };
        std::vector<Output> outputs(rows.size());
        parallel_for(rows.size(), cfg.workers, [&](std::size_t i) {
            const auto start = std::chrono::steady_clock::now();
            const RawCase raw = load_case(rows[i]);
            const int dim = choose_crop_dim(cfg.data.augmentation, raw.image.rows, raw.image.cols, 0, false);
            const Sample s = make_sample(raw, cfg.data.target, dim);
            const LabelMask crop = predict_labels(spec, weights, s.image);
            LabelMask full(raw.image.rows, raw.image.cols, 0);
            for (int r = 0; r < dim; ++r)
                for (int c = 0; c < dim; ++c)
                    full(s.provenance.crop_row + r, s.provenance.crop_col + c) = crop(r, c);
            std::ostringstream log;
            for (auto& [structure, mask] : structure_masks(full, cfg.data.target)) {
                PredictionRow pr{raw.id, structure, raw.id + "_" + structure + ".pgm", std::nullopt};
                PgmImage pgm{mask.rows, mask.cols, 255, {}, raw.spacing};
                for (auto v : mask.data)
                    pgm.pixels.push_back(v ? 255 : 0);
                write_pgm(pgm, out_dir / pr.mask);
                if (auto contour = metrics::mask_to_contour(mask)) {
                    pr.contour = raw.id + "_" + structure + ".txt";
                    write_contour(*contour, out_dir / *pr.contour);
                } else {
                    log << raw.id << ' ' << structure << ": no object detected, contour omitted\n";
                }
                outputs[i].rows.push_back(std::move(pr));
            }
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            log << raw.id << ": " << std::fixed << std::setprecision(1) << ms << " ms\n";
            outputs[i].log = log.str();
        });
        std::ofstream csv(out_dir / "predictions.csv");
        if (!csv)
            throw FormatError("cannot write " + (out_dir / "predictions.csv").string());
        csv << kPredictionsHeader << '\n';
        for (const auto& o : outputs) {
            out << o.log;
            for (const auto& r : o.rows)
                csv << r.id << ',' << r.structure << ',' << r.mask.generic_string() << ','
                    << (r.contour ? r.contour->generic_string() : "") << '\n';
        }
        out << "predictions: " << (out_dir / "predictions.csv").string() << '\n';
    });
}

int run_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    std::vector<ManifestRow> truth_rows;
    std::vector<PredictionRow> pred_rows;
    std::filesystem::path out_dir;
    const bool ok = validate_stage(err, [&] {
        truth_rows = validated_manifest(cfg);
        require_file(cfg.predictions, "predictions");
        out_dir = require_out(cfg);
        pred_rows = parse_predictions(*cfg.predictions);
        std::set<std::string> truth_ids, pred_ids;
        for (const auto& r : truth_rows)
            truth_ids.insert(r.id);
        for (const auto& r : pred_rows) {
            pred_ids.insert(r.id);
            if (!truth_ids.count(r.id))
                throw ContractError("id mismatch: prediction '" + r.id + "' has no ground truth");
        }
        for (const auto& r : truth_rows)
            if (!pred_ids.count(r.id))
                throw ContractError("id mismatch: ground truth '" + r.id + "' has no prediction");
        for (const auto& r : pred_rows) {
            if (!std::filesystem::is_regular_file(r.mask))
                throw ContractError("prediction mask not found: " + r.mask.string());
            if (r.contour && !std::filesystem::is_regular_file(*r.contour))
                throw ContractError("prediction contour not found: " + r.contour->string());
        }
    });
    if (!ok)
        return kValidationError;

    return runtime_stage(err, [&] {
        std::map<std::string, const ManifestRow*> truth_by_id;
        for (const auto& r : truth_rows)
            truth_by_id[r.id] = &r;
        std::vector<std::optional<metrics::ImageMetrics>> results(pred_rows.size());
        std::vector<std::string> notes(pred_rows.size());
        parallel_for(pred_rows.size(), cfg.workers, [&](std::size_t i) {
            const PredictionRow& pr = pred_rows[i];
            const RawCase raw = load_case(*truth_by_id.at(pr.id));
            const Target target = pr.structure == "endo" ? Target::Endo : Target::Epi;
            const auto& truth_contour = target == Target::Endo ? raw.endo : raw.epi;
            if (!truth_contour) {
                notes[i] = "skipping " + pr.id + "/" + pr.structure + ": no ground-truth contour";
                return;
            }
            const PgmImage pgm = read_pgm(pr.mask);
            if (pgm.rows != raw.image.rows || pgm.cols != raw.image.cols)
                throw ContractError("prediction mask for '" + pr.id + "' is " + std::to_string(pgm.rows) + "x" +
                                    std::to_string(pgm.cols) + ", image is " + std::to_string(raw.image.rows) +
                                    "x" + std::to_string(raw.image.cols));
            LabelMask pred(pgm.rows, pgm.cols);
            for (std::size_t p = 0; p < pred.size(); ++p)
                pred.data[p] = pgm.pixels[p] ? 1 : 0;
            const LabelMask truth = *label_mask(raw, target);
            std::optional<Contour> pred_contour;
            if (pr.contour)
                pred_contour = read_contour(*pr.contour);
            if (pred_contour && pred_contour->empty())
                pred_contour.reset();
            results[i] = metrics::evaluate_image(pr.id, pr.structure, pred, truth, pred_contour, *truth_contour,
                                                 raw.spacing, cfg.apd_mode);
        });
        std::vector<metrics::ImageMetrics> images;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (!notes[i].empty())
                err << "warning: " << notes[i] << '\n';
            if (results[i])
                images.push_back(std::move(*results[i]));
        }
        const auto report = metrics::summarize(std::move(images));
        std::filesystem::create_directories(out_dir);
        metrics::write_report_csv(report, out_dir / "metrics.csv");
        out << std::fixed << std::setprecision(4);
        for (const auto& s : report.summaries) {
            out << s.structure << ": " << s.images << " images, Dice " << s.dice.mean.value_or(NAN) << ", APD "
                << s.apd_mm.mean.value_or(NAN) << " mm, good contours " << s.good_contour_pct.value_or(NAN)
                << "%\n";
        }
        out << "metrics: " << (out_dir / "metrics.csv").string() << '\n';
    });
}

int run_phantom(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    std::filesystem::path out_dir;
    const bool ok = validate_stage(err, [&] {
        out_dir = require_out(cfg);
        validate(cfg.phantom);
    });
    if (!ok)
        return kValidationError;
    return runtime_stage(err, [&] {
        const auto manifest = write_phantoms(generate(cfg.phantom), out_dir);
        out << "wrote " << cfg.phantom.count << " family-" << to_string(cfg.phantom.family)
            << " phantoms; manifest: " << manifest.string() << '\n';
    });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Fully convolutional ventricle segmentation", "vfcn"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    Settings flags;
    std::string config_path;

    struct Verb {
        const char* name;
        const char* help;
    };
    const Verb verbs[] = {
        {"train", "train a model from a manifest"},
        {"finetune", "fine-tune from a source weight file"},
        {"predict", "segment every image of a manifest"},
        {"evaluate", "score predictions against ground truth"},
        {"phantom", "write a synthetic dataset"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& v : verbs) {
        CLI::App* sub = app.add_subcommand(v.name, v.help);
        sub->allow_extras();
        sub->add_option("--config", config_path, "flat key = value settings file");
        auto flag = [&](const char* name, const char* key, const char* help) {
            sub->add_option_function<std::string>(
                name, [&flags, key](const std::string& value) { flags[key] = value; }, help);
        };
        flag("--manifest", "manifest", "manifest CSV (id,image,contour_endo,contour_epi)");
        flag("--arch", "arch", "network description file (default: built-in)");
        flag("--weights", "weights", "weight file");
        flag("--out", "out", "output directory");
        flag("--seed", "seed", "random seed");
        flag("--workers", "workers", "worker threads");
        flag("--k-classes", "k_classes", "number of classes");
        if (std::string_view(v.name) == "finetune")
            flag("--source-weights", "source_weights", "pretrained source weight file");
        if (std::string_view(v.name) == "evaluate")
            flag("--predictions", "predictions", "predictions.csv written by predict");
        subs[v.name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kValidationError;
    }

    std::string verb;
    for (const auto& [name, sub] : subs)
        if (sub->parsed())
            verb = name;

    RunConfig cfg;
    const bool ok = validate_stage(err, [&] {
        Settings settings;
        if (!config_path.empty())
            settings = read_settings_file(config_path);
        // Extra `--key value` / `--key=value` pairs overlay the file.
        const auto extras = subs[verb]->remaining();
        for (std::size_t i = 0; i < extras.size(); ++i) {
            const std::string& a = extras[i];
            if (a.rfind("--", 0) != 0)
                throw ContractError("unexpected argument '" + a + "'");
            std::string key = a.substr(2);
            std::string value;
            if (const auto eq = key.find('='); eq != std::string::npos) {
                value = key.substr(eq + 1);
                key.erase(eq);
            } else {
                if (i + 1 >= extras.size())
                    throw ContractError("option '" + a + "' needs a value");
                value = extras[++i];
            }
            settings[normalize_key(key)] = value;
        }
        for (const auto& [k, v] : flags)
            settings[k] = v;
        cfg = make_run_config(verb, settings);
    });
    if (!ok)
        return kValidationError;

    if (verb == "train")
        return run_train(cfg, out, err);
    if (verb == "finetune")
        return run_finetune(cfg, out, err);
    if (verb == "predict")
        return run_predict(cfg, out, err);
    if (verb == "evaluate")
        return run_evaluate(cfg, out, err);
    return run_phantom(cfg, out, err);
}

}  // namespace vfcn::cli
