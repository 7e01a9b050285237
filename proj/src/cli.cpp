#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mgeo/bridge.hpp"
#include "mgeo/catalog.hpp"
#include "mgeo/cli.hpp"
#include "mgeo/error.hpp"
#include "mgeo/harness.hpp"

namespace mgeo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Distinguishes bad invocations (exit 1) from failures during a run (exit 2).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace

void RunConfig::validate() const {
    if (ranker != "toy" && ranker != "bridge") throw ValidationError("--ranker must be toy or bridge");
    if (ranker == "bridge") {
        parse_bridge_address(bridge_addr);
        if (workers != 1) throw ValidationError("--workers must be 1 with the bridge ranker");
    }
    if (!(bridge_timeout > 0.0)) throw ValidationError("--bridge-timeout must be positive");
    parse_attack_kind(kind);
    if (workers < 1) throw ValidationError("--workers must be >= 1");
    if (max_products < 0) throw ValidationError("--max-products must be >= 0");
    if (!(mask_threshold >= 0.0)) throw ValidationError("--mask-threshold must be >= 0");
    if (resolution <= 0 || patch_size <= 0 || resolution % patch_size != 0) {
        throw ValidationError("--resolution must be a positive multiple of --patch-size");
    }
    if (embed_dim <= 0) throw ValidationError("--embed-dim must be positive");
    if (!(temperature > 0.0)) throw ValidationError("--temperature must be positive");
    if (init != "uniform" && init != "prefix") throw ValidationError("--init must be uniform or prefix");
    joint_config(*this).validate();
}

std::vector<std::string> split_phrases(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto first = item.find_first_not_of(' ');
        const auto last = item.find_last_not_of(' ');
        if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
    }
    return out;
}

json to_json(const RunConfig& c) {
    return {
        {"catalog", c.catalog},
        {"ranker", c.ranker},
        {"bridge-addr", c.bridge_addr},
        {"bridge-timeout", c.bridge_timeout},
        {"kind", c.kind},
        {"target", c.target},
        {"seed", c.seed},
        {"out", c.out},
        {"workers", c.workers},
        {"max-products", c.max_products},
        {"mask-threshold", c.mask_threshold},
        {"resolution", c.resolution},
        {"patch-size", c.patch_size},
        {"embed-dim", c.embed_dim},
        {"temperature", c.temperature},
        {"text-weight", c.text_weight},
        {"image-weight", c.image_weight},
        {"interaction-weight", c.interaction_weight},
        {"rounds", c.rounds},
        {"kt", c.kt},
        {"ki", c.ki},
        {"alpha", c.alpha},
        {"lambda-s", c.lambda_s},
        {"lambda-m", c.lambda_m},
        {"lambda-f", c.lambda_f},
        {"lambda-n", c.lambda_n},
        {"suffix-len", c.suffix_len},
        {"lr", c.lr},
        {"init", c.init},
        {"w-fg", c.w_fg},
        {"w-bg", c.w_bg},
        {"banned", c.banned},
        {"grid", c.grid},
        {"replacement-text", c.replacement_text},
        {"replacement-image", c.replacement_image},
    };
}

RankerConfig ranker_config(const RunConfig& c) {
    RankerConfig r;
    r.seed = c.seed;
    r.embed_dim = c.embed_dim;
    r.patch_size = c.patch_size;
    r.resolution = c.resolution;
    r.text_weight = c.text_weight;
    r.image_weight = c.image_weight;
    r.interaction_weight = c.interaction_weight;
    r.temperature = c.temperature;
    return r;
}

JointConfig joint_config(const RunConfig& c) {
    JointConfig j;
    j.rounds = c.rounds;
    j.seed = c.seed;
    j.text.suffix_length = c.suffix_len;
    j.text.steps = c.kt;
    j.text.learning_rate = c.lr;
    j.text.lambda_fluency = c.lambda_f;
    j.text.lambda_ngram = c.lambda_n;
    j.text.banned = split_phrases(c.banned);
    j.text.init = c.init == "prefix" ? SuffixInit::DescriptionPrefix : SuffixInit::Uniform;
    j.text.seed = c.seed;
    j.image.steps = c.ki;
    j.image.step_size = c.alpha;
    j.image.lambda_smooth = c.lambda_s;
    j.image.lambda_magnitude = c.lambda_m;
    j.image.foreground_weight = c.w_fg;
    j.image.background_weight = c.w_bg;
    j.image.seed = c.seed;
    return j;
}

std::string suggest_flag(const std::string& unknown, const std::vector<std::string>& known) {
    auto distance = [](const std::string& a, const std::string& b) {
        std::vector<std::size_t> row(b.size() + 1);
        for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
        for (std::size_t i = 1; i <= a.size(); ++i) {
            std::size_t diag = row[0];
            row[0] = i;
            for (std::size_t j = 1; j <= b.size(); ++j) {
                const std::size_t up = row[j];
                row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
                diag = up;
            }
        }
        return row[b.size()];
    };
    std::string best;
    std::size_t best_d = std::max<std::size_t>(3, unknown.size() / 3) + 1;
    for (const auto& k : known) {
        const std::size_t d = distance(unknown, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

namespace {

const char* kToolName = "mgeo";

struct Context {
    RunConfig config;
    std::string command;
    std::vector<std::string> results;  // report inputs
    std::ostream& out;
    std::ostream& err;
};

void add_common(CLI::App& sub, RunConfig& c, bool needs_catalog) {
    auto* catalog = sub.add_option("--catalog", c.catalog, "Catalog JSON file");
    if (needs_catalog) catalog->required();
    sub.add_option("--ranker", c.ranker, "Ranker backend: toy or bridge")->capture_default_str();
    sub.add_option("--bridge-addr", c.bridge_addr, "Bridge server host:port")->capture_default_str();
    sub.add_option("--bridge-timeout", c.bridge_timeout, "Bridge request timeout in seconds")->capture_default_str();
    sub.add_option("--seed", c.seed, "Ranker parameter seed; also the base seed for per-target seeds")
        ->capture_default_str();
    sub.add_option("--max-products", c.max_products, "Keep only the first N products (0 keeps all)")
        ->capture_default_str();
    sub.add_option("--mask-threshold", c.mask_threshold, "Background distance threshold for estimated masks")
        ->capture_default_str();
    sub.add_option("--resolution", c.resolution, "Ranker image resolution")->capture_default_str();
    sub.add_option("--patch-size", c.patch_size, "Ranker patch size")->capture_default_str();
    sub.add_option("--embed-dim", c.embed_dim, "Ranker embedding dimension")->capture_default_str();
    sub.add_option("--temperature", c.temperature, "Plackett-Luce temperature")->capture_default_str();
    sub.add_option("--text-weight", c.text_weight, "Score weight of the text cosine")->capture_default_str();
    sub.add_option("--image-weight", c.image_weight, "Score weight of the image cosine")->capture_default_str();
    sub.add_option("--interaction-weight", c.interaction_weight, "Score weight of the text-image product")
        ->capture_default_str();
}

void add_attack_params(CLI::App& sub, RunConfig& c) {
    sub.add_option("--rounds", c.rounds, "Alternation rounds")->capture_default_str();
    sub.add_option("--kt", c.kt, "Text steps per round")->capture_default_str();
    sub.add_option("--ki", c.ki, "Image steps per round")->capture_default_str();
    sub.add_option("--alpha", c.alpha, "PGD step size")->capture_default_str();
    sub.add_option("--lambda-s", c.lambda_s, "Smoothness weight")->capture_default_str();
    sub.add_option("--lambda-m", c.lambda_m, "Magnitude weight")->capture_default_str();
    sub.add_option("--lambda-f", c.lambda_f, "Fluency weight")->capture_default_str();
    sub.add_option("--lambda-n", c.lambda_n, "Banned n-gram weight")->capture_default_str();
    sub.add_option("--suffix-len", c.suffix_len, "Suffix length in tokens")->capture_default_str();
    sub.add_option("--lr", c.lr, "Suffix learning rate")->capture_default_str();
    sub.add_option("--init", c.init, "Suffix init: uniform or prefix")->capture_default_str();
    sub.add_option("--w-fg", c.w_fg, "Magnitude weight on foreground pixels")->capture_default_str();
    sub.add_option("--w-bg", c.w_bg, "Magnitude weight on background pixels")->capture_default_str();
    sub.add_option("--banned", c.banned, "Comma-separated banned phrases")->capture_default_str();
}

std::vector<std::string> long_names(const CLI::App& sub) {
    std::vector<std::string> names;
    for (const CLI::Option* opt : sub.get_options()) {
        for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
    }
    return names;
}

// Turns a JSON config into flags placed ahead of the user's own, so that
// command-line flags win under the take-last policy.
std::vector<std::string> config_args(const fs::path& path, const CLI::App& sub) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config file " + path.string() + ": " + e.what());
    }
    if (j.contains("config") && j["config"].is_object()) j = j["config"];  // accept a whole report
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");
    const json known = to_json(RunConfig{});
    const auto names = long_names(sub);
    std::vector<std::string> args;
    for (const auto& [key, value] : j.items()) {
        if (key == "command" || key == "config") continue;
        if (!known.contains(key)) throw UsageError("unknown config key \"" + key + "\"");
        if (std::find(names.begin(), names.end(), "--" + key) == names.end()) continue;
        if (value.is_string() && value.get<std::string>().empty()) continue;
        args.push_back("--" + key);
        args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
    return args;
}

json echo(const Context& ctx, const CLI::App& sub) {
    const json full = to_json(ctx.config);
    json e = {{"command", ctx.command}};
    for (const auto& name : long_names(sub)) {
        const std::string key = name.substr(2);
        if (full.contains(key)) e[key] = full[key];
    }
    return e;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

std::string csv_with_echo(const json& config, const std::string& csv) { return "# config: " + config.dump() + "\n" + csv; }

Catalog load_raw(const RunConfig& c) {
    Catalog raw = load_catalog(c.catalog);
    if (c.max_products > 0 && raw.size() > static_cast<std::size_t>(c.max_products)) {
        warn("catalog has " + std::to_string(raw.size()) + " products; keeping the first " +
             std::to_string(c.max_products));
        raw = truncate_catalog(raw, static_cast<std::size_t>(c.max_products));
    }
    return raw;
}

std::shared_ptr<BridgeClient> make_client(const RunConfig& c) {
    const auto ms = std::chrono::milliseconds(static_cast<long long>(c.bridge_timeout * 1000.0));
    return std::make_shared<BridgeClient>(parse_bridge_address(c.bridge_addr), ms);
}

// Holds whichever backend was selected; setups borrow from it.
struct Backend {
    std::unique_ptr<ToyModel> toy;
    std::unique_ptr<BridgeModel> bridge;

    const Catalog& catalog() const { return toy ? toy->catalog : bridge->catalog; }
    std::vector<std::size_t> pre_ranking() const { return toy ? toy->pre_ranking.permutation : bridge->pre_ranking; }

    SweepSubject subject() const {
        if (toy) return toy_subject(*toy);
        SweepSubject s;
        s.category = bridge->catalog.category;
        for (const auto& p : bridge->catalog.products) s.ids.push_back(p.id);
        const BridgeModel* m = bridge.get();
        s.make_setup = [m](std::size_t t) { return make_bridge_setup(*m, t); };
        s.digest = [m] { return catalog_digest(m->catalog); };
        return s;
    }
};

Backend make_backend(const RunConfig& c) {
    const Catalog raw = load_raw(c);
    const auto banned = split_phrases(c.banned);
    Backend b;
    if (c.ranker == "toy") {
        b.toy = std::make_unique<ToyModel>(ToyModel::build(raw, ranker_config(c), banned, c.mask_threshold));
    } else {
        b.bridge = std::make_unique<BridgeModel>(BridgeModel::build(make_client(c), raw, banned, c.mask_threshold));
    }
    return b;
}

int cmd_rank(Context& ctx, const CLI::App& sub) {
    const Backend backend = make_backend(ctx.config);
    const Catalog& catalog = backend.catalog();
    json ranking = json::array();
    std::ostream& out = ctx.out;
    out << "category: " << catalog.category << "\n";
    for (std::size_t k = 0; k < catalog.size(); ++k) {
        const std::size_t i = backend.pre_ranking()[k];
        json row = {{"rank", k + 1}, {"id", catalog.products[i].id}, {"name", catalog.products[i].name}};
        out << std::setw(3) << k + 1 << "  " << catalog.products[i].id;
        if (backend.toy) {
            const double s = backend.toy->pre_ranking.scores[i];
            row["score"] = s;
            std::ostringstream num;
            num << std::setprecision(17) << s;
            out << "  " << num.str();
        }
        out << "  " << catalog.products[i].name << "\n";
        ranking.push_back(row);
    }
    if (!ctx.config.out.empty()) {
        json doc = {{"config", echo(ctx, sub)}, {"category", catalog.category}, {"ranking", ranking}};
        if (backend.toy) doc["sequence_nll"] = backend.toy->pre_ranking.sequence_nll;
        const fs::path path = fs::path(ctx.config.out) / "ranking.json";
        write_text(path, doc.dump(2) + "\n");
        out << "wrote " << path.string() << "\n";
    }
    return 0;
}

int cmd_attack(Context& ctx, const CLI::App& sub) {
    const RunConfig& c = ctx.config;
    if (c.target.empty()) throw UsageError("--target is required");
    const Backend backend = make_backend(c);
    const auto index = backend.catalog().find(c.target);
    if (!index) throw UsageError("no product with id \"" + c.target + "\" in " + c.catalog);
    const AttackSetup setup = backend.toy ? make_toy_setup(*backend.toy, *index) : make_bridge_setup(*backend.bridge, *index);
    const AttackKind kind = parse_attack_kind(c.kind);

    JointConfig jc = joint_config(c);
    jc.seed = jc.text.seed = jc.image.seed = derive_seed(c.seed, c.target);
    AttackReport report;
    if (kind == AttackKind::Static) {
        std::optional<std::string> text;
        std::optional<Image> image;
        if (!c.replacement_text.empty()) text = c.replacement_text;
        if (!c.replacement_image.empty()) {
            image = read_image(c.replacement_image);
            if (!image->same_shape(setup.base_image)) {
                image = resize_nearest(*image, setup.base_image.height, setup.base_image.width);
            }
        }
        report = text || image ? evaluate_static_edit(setup, text, image) : run_attack(setup, kind, jc);
    } else {
        report = run_attack(setup, kind, jc);
    }
    const json config = echo(ctx, sub);
    report.config = config;

    const fs::path dir = c.out.empty() ? fs::path("mgeo-out") : fs::path(c.out);
    json doc = to_json(report);
    doc["images"] = {{"deployed", "adversarial.ppm"}, {"float", "adversarial.f64"}};
    fs::create_directories(dir);
    write_image(report.deployed_image, dir / "adversarial.ppm");
    write_float_sidecar(report.adversarial_image, dir / "adversarial.f64");
    for (const auto& round : report.rounds) {
        const std::string r = std::to_string(round.round);
        if (!round.text.empty()) write_text(dir / ("text_trace_round" + r + ".csv"), csv_with_echo(config, text_trace_csv(round.text)));
        if (!round.image.empty()) {
            write_text(dir / ("image_trace_round" + r + ".csv"), csv_with_echo(config, image_trace_csv(round.image)));
        }
    }
    write_text(dir / "report.json", doc.dump(2) + "\n");

    ctx.out << "target " << report.target_id << ": rank " << report.pre_rank << " -> " << report.post_rank
            << " (change " << report.rank_change() << ")\n";
    if (!report.decoded_suffix.empty()) ctx.out << "suffix: " << report.decoded_suffix << "\n";
    if (report.float_only_gain) ctx.out << "note: the unquantized image ranks better than the deployed one\n";
    ctx.out << "wrote " << (dir / "report.json").string() << "\n";
    return 0;
}

std::string slug(const std::string& text) {
    std::string s;
    for (char ch : text) s += std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::tolower(ch)) : '-';
    return s.empty() ? "catalog" : s;
}

int cmd_sweep(Context& ctx, const CLI::App& sub) {
    const RunConfig& c = ctx.config;
    const Backend backend = make_backend(c);
    SweepResult result = leave_one_out(backend.subject(), parse_attack_kind(c.kind), joint_config(c),
                                       SweepOptions{c.seed, c.workers});
    result.config = echo(ctx, sub);
    const fs::path dir = c.out.empty() ? fs::path("mgeo-out") : fs::path(c.out);
    const fs::path path = dir / ("sweep_" + slug(result.category) + "_" + result.kind + ".json");
    write_text(path, to_json(result).dump(2) + "\n");
    ctx.out << result.category << " " << result.kind << ": mean rank change " << result.mean_rank_change << " over "
            << result.completed << "/" << result.records.size() << " targets\n";
    for (const auto& rec : result.records) {
        if (!rec.completed) ctx.err << "target " << rec.target_id << " aborted: " << rec.error << "\n";
    }
    ctx.out << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_ablate(Context& ctx, const CLI::App& sub) {
    const RunConfig& c = ctx.config;
    const auto grid = parse_grid(c.grid);
    const Backend backend = make_backend(c);
    auto rows = sweep_regularization(backend.subject(), grid, joint_config(c), SweepOptions{c.seed, c.workers});
    const json config = echo(ctx, sub);
    json cells = json::array();
    for (auto& row : rows) {
        row.sweep.config = config;
        cells.push_back({{"lambda_s", row.lambda_smooth}, {"lambda_m", row.lambda_magnitude}, {"sweep", to_json(row.sweep)}});
    }
    const fs::path dir = c.out.empty() ? fs::path("mgeo-out") : fs::path(c.out);
    const std::string csv = ablation_csv(rows);
    write_text(dir / "ablation.csv", csv_with_echo(config, csv));
    write_text(dir / "ablation.json", json{{"config", config}, {"cells", cells}}.dump(2) + "\n");
    ctx.out << csv << "wrote " << (dir / "ablation.csv").string() << "\n";
    return 0;
}

int cmd_report(Context& ctx) {
    if (ctx.results.empty()) throw UsageError("report needs at least one sweep JSON file");
    std::vector<SweepResult> sweeps;
    for (const auto& file : ctx.results) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot read " + file);
        try {
            sweeps.push_back(sweep_from_json(json::parse(in)));
        } catch (const json::exception& e) {
            throw ParseError(file + ": " + e.what());
        }
    }
    const std::string csv = category_csv(aggregate_by_category(sweeps));
    ctx.out << csv;
    if (!ctx.config.out.empty()) {
        const json config = {{"command", "report"}, {"results", ctx.results}, {"out", ctx.config.out}};
        const fs::path path = fs::path(ctx.config.out) / "category_table.csv";
        write_text(path, csv_with_echo(config, csv));
        ctx.out << "wrote " << path.string() << "\n";
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig config;
    Context ctx{config, "", {}, out, err};
    RunConfig& c = ctx.config;

    CLI::App app{"Joint text and image ranking attacks on a toy multimodal ranker", kToolName};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_file;

    auto* rank = app.add_subcommand("rank", "Print the pre-attack ranking of a catalog");
    auto* attack = app.add_subcommand("attack", "Attack one target listing");
    auto* sweep = app.add_subcommand("sweep", "Leave-one-out attack over every listing");
    auto* ablate = app.add_subcommand("ablate", "Image-only sweeps over a (lambda_s, lambda_m) grid");
    auto* report = app.add_subcommand("report", "Aggregate sweep JSON files into a category table");

    for (auto* sub : {rank, attack, sweep, ablate, report}) {
        sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        sub->allow_extras();
        sub->add_option("--config", config_file, "JSON config; command-line flags override it");
    }
    for (auto* sub : {rank, attack, sweep, ablate}) add_common(*sub, c, true);
    for (auto* sub : {attack, sweep, ablate}) {
        add_attack_params(*sub, c);
        sub->add_option("--out", c.out, "Output directory (default mgeo-out)");
    }
    rank->add_option("--out", c.out, "Also write ranking.json into this directory");
    attack->add_option("--kind", c.kind, "text, image, joint or static")->capture_default_str();
    attack->add_option("--target", c.target, "Product id to promote");
    attack->add_option("--replacement-text", c.replacement_text, "Static edit: replacement description");
    attack->add_option("--replacement-image", c.replacement_image, "Static edit: replacement PPM image");
    sweep->add_option("--kind", c.kind, "text, image, joint or static")->capture_default_str();
    for (auto* sub : {sweep, ablate}) sub->add_option("--workers", c.workers, "Parallel targets")->capture_default_str();
    ablate->add_option("--grid", c.grid, "Semicolon-separated lambda_s,lambda_m cells")->capture_default_str();
    report->add_option("results", ctx.results, "Sweep JSON files")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    report->add_option("--out", c.out, "Also write category_table.csv into this directory");

    // Reverse order as CLI11 expects argv-style input.
    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        // A config file is expanded in front of the user's flags.
        auto it = std::find(args.begin(), args.end(), "--config");
        if (it != args.end() && std::next(it) != args.end() && !args.empty()) {
            CLI::App* sub = nullptr;
            for (auto* s : {rank, attack, sweep, ablate, report}) {
                if (args.front() == s->get_name()) sub = s;
            }
            if (sub) {
                auto extra = config_args(*std::next(it), *sub);
                std::vector<std::string> merged{args.front()};
                merged.insert(merged.end(), extra.begin(), extra.end());
                merged.insert(merged.end(), args.begin() + 1, args.end());
                argv.assign(merged.rbegin(), merged.rend());
            }
        }
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        err << kToolName << ": " << e.what() << "\n";
        return 1;
    }

    CLI::App* chosen = app.get_subcommands().front();
    ctx.command = chosen->get_name();
    if (const auto extras = chosen->remaining(); !extras.empty()) {
        const std::string& first = extras.front();
        err << kToolName << " " << ctx.command << ": unknown argument " << first;
        if (first.rfind("-", 0) == 0) {
            const std::string flag = first.substr(0, first.find('='));
            if (const auto s = suggest_flag(flag, long_names(*chosen)); !s.empty()) err << " (did you mean " << s << "?)";
        }
        err << "\nRun with --help for usage.\n";
        return 1;
    }

    try {
        if (ctx.command != "report") c.validate();
    } catch (const Error& e) {
        err << kToolName << " " << ctx.command << ": " << e.what() << "\n";
        return 1;
    }

    try {
        if (ctx.command == "rank") return cmd_rank(ctx, *chosen);
        if (ctx.command == "attack") return cmd_attack(ctx, *chosen);
        if (ctx.command == "sweep") return cmd_sweep(ctx, *chosen);
        if (ctx.command == "ablate") return cmd_ablate(ctx, *chosen);
        return cmd_report(ctx);
    } catch (const UsageError& e) {
        err << kToolName << " " << ctx.command << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << kToolName << " " << ctx.command << ": error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace mgeo
