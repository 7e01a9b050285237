#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "mgeo/error.hpp"
#include "mgeo/harness.hpp"

namespace mgeo {

using nlohmann::json;

int rank_change(int pre, int post, std::size_t n) {
    const int limit = static_cast<int>(n);
    if (pre < 1 || pre > limit || post < 1 || post > limit) {
        throw DomainError("rank out of range [1, " + std::to_string(n) + "]: pre=" + std::to_string(pre) +
                          " post=" + std::to_string(post));
    }
    return post - pre;
}

std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& target_id) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : target_id) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    // splitmix64 finalizer
    std::uint64_t z = base_seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

SweepSubject toy_subject(const ToyModel& model) {
    SweepSubject subject;
    subject.category = model.catalog.category;
    for (const auto& p : model.catalog.products) subject.ids.push_back(p.id);
    subject.make_setup = [&model](std::size_t target) { return make_toy_setup(model, target); };
    subject.digest = [&model] { return catalog_digest(model.catalog); };
    return subject;
}

SweepResult leave_one_out(const SweepSubject& subject, const std::string& kind, const AttackFn& attack,
                          const SweepOptions& options, json config) {
    const std::size_t n = subject.ids.size();
    SweepResult result;
    result.category = subject.category;
    result.kind = kind;
    result.config = std::move(config);
    result.records.resize(n);
    const std::uint64_t pristine = subject.digest ? subject.digest() : 0;

    std::atomic<std::size_t> next{0};
    std::mutex digest_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            TargetRecord& rec = result.records[i];
            rec.target_id = subject.ids[i];
            rec.target_index = i;
            rec.seed = derive_seed(options.base_seed, rec.target_id);
            try {
                const AttackSetup setup = subject.make_setup(i);
                const AttackReport report = attack(setup, rec.seed);
                rec.pre_rank = report.pre_rank;
                rec.post_rank = report.post_rank;
                rec.rank_change = rank_change(report.pre_rank, report.post_rank, n);
                rec.stats = report.stats;
                rec.completed = true;
            } catch (const std::exception& e) {
                rec.error = e.what();
            }
            if (subject.digest) {
                std::lock_guard lock(digest_mutex);
                if (subject.digest() != pristine) {
                    rec.completed = false;
                    rec.error = "isolation violated: catalog changed while attacking " + rec.target_id;
                }
            }
        }
    };
    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(n)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    double sum = 0.0, l1 = 0.0, linf = 0.0;
    for (const auto& rec : result.records) {
        result.seeds.push_back(rec.seed);
        if (!rec.completed) continue;
        ++result.completed;
        sum += rec.rank_change;
        l1 += rec.stats.weighted_l1;
        linf += rec.stats.linf;
    }
    if (result.completed > 0) {
        const double count = static_cast<double>(result.completed);
        result.mean_rank_change = sum / count;
        result.mean_weighted_l1 = l1 / count;
        result.mean_linf = linf / count;
    }
    return result;
}

SweepResult leave_one_out(const SweepSubject& subject, AttackKind kind, const JointConfig& config,
                          const SweepOptions& options) {
    config.validate();
    AttackFn attack = [kind, config](const AttackSetup& setup, std::uint64_t seed) {
        JointConfig c = config;
        c.seed = c.text.seed = c.image.seed = seed;
        return run_attack(setup, kind, c);
    };
    json echo = to_json(config);
    echo["base_seed"] = options.base_seed;
    return leave_one_out(subject, to_string(kind), attack, options, echo);
}

std::vector<std::pair<double, double>> parse_grid(const std::string& text) {
    std::vector<std::pair<double, double>> grid;
    std::stringstream cells(text);
    std::string cell;
    while (std::getline(cells, cell, ';')) {
        if (cell.find_first_not_of(" \t") == std::string::npos) continue;
        const auto comma = cell.find(',');
        if (comma == std::string::npos) throw ValidationError("grid cell \"" + cell + "\" must be \"lambda_s,lambda_m\"");
        try {
            std::size_t used = 0;
            const std::string a = cell.substr(0, comma), b = cell.substr(comma + 1);
            const double s = std::stod(a, &used);
            if (a.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(a);
            const double m = std::stod(b, &used);
            if (b.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(b);
            grid.emplace_back(s, m);
        } catch (const std::logic_error&) {
            throw ValidationError("grid cell \"" + cell + "\" is not numeric");
        }
    }
    if (grid.empty()) throw ValidationError("regularization grid is empty");
    return grid;
}

std::vector<AblationRow> sweep_regularization(const SweepSubject& subject,
                                              const std::vector<std::pair<double, double>>& grid,
                                              const JointConfig& config, const SweepOptions& options) {
    if (grid.empty()) throw ValidationError("regularization grid is empty");
    std::vector<AblationRow> rows;
    for (const auto& [s, m] : grid) {
        JointConfig cell = config;
        cell.image.lambda_smooth = s;
        cell.image.lambda_magnitude = m;
        rows.push_back({s, m, leave_one_out(subject, AttackKind::Image, cell, options)});
    }
    return rows;
}

namespace {
std::string num(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}
}  // namespace

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "lambda_s,lambda_m,mean_rank_change,mean_weighted_l1,mean_linf\n";
    for (const auto& row : rows) {
        out += num(row.lambda_smooth) + ',' + num(row.lambda_magnitude) + ',' + num(row.sweep.mean_rank_change) + ',' +
               num(row.sweep.mean_weighted_l1) + ',' + num(row.sweep.mean_linf) + '\n';
    }
    return out;
}

CategoryTable aggregate_by_category(const std::vector<SweepResult>& results) {
    if (results.empty()) throw ValidationError("no sweep results to aggregate");
    CategoryTable table;
    const std::vector<std::string> preferred = {"text", "image", "joint", "static"};
    for (const auto& k : preferred) {
        if (std::any_of(results.begin(), results.end(), [&](const SweepResult& r) { return r.kind == k; })) {
            table.kinds.push_back(k);
        }
    }
    for (const auto& r : results) {
        if (std::find(table.kinds.begin(), table.kinds.end(), r.kind) == table.kinds.end()) table.kinds.push_back(r.kind);
    }

    std::vector<std::string> categories;
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> cells;
    for (const auto& r : results) {
        if (std::find(categories.begin(), categories.end(), r.category) == categories.end()) {
            categories.push_back(r.category);
        }
        auto& cell = cells[{r.category, r.kind}];
        cell.first += r.mean_rank_change;
        cell.second += 1;
    }
    table.overall.category = "Overall";
    table.overall.means.assign(table.kinds.size(), std::nullopt);
    std::vector<std::pair<double, int>> totals(table.kinds.size(), {0.0, 0});
    for (const auto& category : categories) {
        CategoryRow row{category, {}};
        for (std::size_t k = 0; k < table.kinds.size(); ++k) {
            auto it = cells.find({category, table.kinds[k]});
            if (it == cells.end()) {
                row.means.push_back(std::nullopt);
                continue;
            }
            const double mean = it->second.first / it->second.second;
            row.means.push_back(mean);
            totals[k].first += mean;
            totals[k].second += 1;
        }
        table.rows.push_back(std::move(row));
    }
    for (std::size_t k = 0; k < totals.size(); ++k) {
        if (totals[k].second) table.overall.means[k] = totals[k].first / totals[k].second;
    }
    return table;
}

std::string category_csv(const CategoryTable& table) {
    auto label = [](const std::string& kind) -> std::string {
        if (kind == "text") return "Text-Only";
        if (kind == "image") return "Image-Only";
        if (kind == "joint") return "Joint Multimodal";
        if (kind == "static") return "Baseline";
        return kind;
    };
    std::string out = "Category";
    for (const auto& k : table.kinds) out += "," + label(k);
    out += '\n';
    auto emit = [&](const CategoryRow& row) {
        out += row.category;
        for (const auto& m : row.means) out += "," + (m ? num(*m) : std::string());
        out += '\n';
    };
    for (const auto& row : table.rows) emit(row);
    emit(table.overall);
    return out;
}

json to_json(const TargetRecord& r) {
    json j = {{"target_id", r.target_id}, {"target_index", r.target_index}, {"seed", r.seed},
              {"completed", r.completed}};
    if (r.completed) {
        j["pre_rank"] = r.pre_rank;
        j["post_rank"] = r.post_rank;
        j["rank_change"] = r.rank_change;
        j["perturbation"] = to_json(r.stats);
    } else {
        j["error"] = r.error;
    }
    return j;
}

json to_json(const SweepResult& r) {
    json records = json::array();
    for (const auto& rec : r.records) records.push_back(to_json(rec));
    return {
        {"category", r.category},
        {"kind", r.kind},
        {"records", records},
        {"completed", r.completed},
        {"total", r.records.size()},
        {"mean_rank_change", r.mean_rank_change},
        {"mean_over", r.all_completed() ? "all targets" : "completed targets only"},
        {"mean_weighted_l1", r.mean_weighted_l1},
        {"mean_linf", r.mean_linf},
        {"seeds", r.seeds},
        {"config", r.config},
    };
}

SweepResult sweep_from_json(const json& j) {
    SweepResult r;
    r.category = j.at("category").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.completed = j.at("completed").get<std::size_t>();
    r.mean_rank_change = j.at("mean_rank_change").get<double>();
    r.mean_weighted_l1 = j.value("mean_weighted_l1", 0.0);
    r.mean_linf = j.value("mean_linf", 0.0);
    r.config = j.value("config", json());
    r.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    for (const auto& rec : j.at("records")) {
        TargetRecord t;
        t.target_id = rec.at("target_id").get<std::string>();
        t.target_index = rec.at("target_index").get<std::size_t>();
        t.seed = rec.value("seed", std::uint64_t{0});
        t.completed = rec.at("completed").get<bool>();
        if (t.completed) {
            t.pre_rank = rec.at("pre_rank").get<int>();
            t.post_rank = rec.at("post_rank").get<int>();
            t.rank_change = rec.at("rank_change").get<int>();
            const json& p = rec.at("perturbation");
            t.stats = {p.at("linf").get<double>(), p.at("weighted_l1").get<double>(),
                       p.at("total_variation").get<double>()};
        } else {
            t.error = rec.value("error", std::string());
        }
        r.records.push_back(std::move(t));
    }
    return r;
}

}  // namespace mgeo
