#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mgeo/joint_attack.hpp"

namespace mgeo {

/// post − pre; negative means promotion. Both ranks must lie in [1, n].
int rank_change(int pre, int post, std::size_t n);

/// Per-target seed, independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& target_id);

struct TargetRecord {
    std::string target_id;
    std::size_t target_index = 0;
    std::uint64_t seed = 0;
    bool completed = false;
    std::string error;
    int pre_rank = 0;
    int post_rank = 0;
    int rank_change = 0;
    PerturbationStats stats;
};

struct SweepResult {
    std::string category;
    std::string kind;
    std::vector<TargetRecord> records;
    std::size_t completed = 0;
    /// Mean over completed targets only; equals the full mean when nothing aborted.
    double mean_rank_change = 0.0;
    double mean_weighted_l1 = 0.0;
    double mean_linf = 0.0;
    nlohmann::json config;
    std::vector<std::uint64_t> seeds;

    bool all_completed() const { return completed == records.size(); }
};

/// What the harness needs from a catalog: its size, ids, a way to build the
/// attack setup for each target, and a digest of the pristine listings.
struct SweepSubject {
    std::string category;
    std::vector<std::string> ids;
    std::function<AttackSetup(std::size_t target)> make_setup;
    std::function<std::uint64_t()> digest;
};

SweepSubject toy_subject(const ToyModel& model);

using AttackFn = std::function<AttackReport(const AttackSetup& setup, std::uint64_t seed)>;

struct SweepOptions {
    std::uint64_t base_seed = 0;
    int workers = 1;
};

/// Attacks every listing in turn with all others at their originals and
/// averages the rank change. Per-target aborts are recorded and excluded
/// from the mean; a digest mismatch after any target is recorded as an
/// isolation failure on that target.
SweepResult leave_one_out(const SweepSubject& subject, const std::string& kind, const AttackFn& attack,
                          const SweepOptions& options, nlohmann::json config = nullptr);

/// Standard attacks: kind text|image|joint runs the MGEO loops with the
/// per-target seed written into `config`; static evaluates unedited content.
SweepResult leave_one_out(const SweepSubject& subject, AttackKind kind, const JointConfig& config,
                          const SweepOptions& options);

struct AblationRow {
    double lambda_smooth = 0.0;
    double lambda_magnitude = 0.0;
    SweepResult sweep;
};

/// Parses "10,10;5,5;0,5" into (λ_s, λ_m) pairs.
std::vector<std::pair<double, double>> parse_grid(const std::string& text);

/// One image-only leave-one-out sweep per (λ_s, λ_m) cell.
std::vector<AblationRow> sweep_regularization(const SweepSubject& subject,
                                              const std::vector<std::pair<double, double>>& grid,
                                              const JointConfig& config, const SweepOptions& options);

/// Columns: lambda_s,lambda_m,mean_rank_change,mean_weighted_l1,mean_linf.
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct CategoryRow {
    std::string category;
    std::vector<std::optional<double>> means;  // one per column kind
};

struct CategoryTable {
    std::vector<std::string> kinds;  // column order
    std::vector<CategoryRow> rows;
    CategoryRow overall;
};

/// Per-category mean rank change per attack kind, plus an overall row that
/// averages the per-category means. Throws ValidationError on empty input.
CategoryTable aggregate_by_category(const std::vector<SweepResult>& results);
std::string category_csv(const CategoryTable& table);

nlohmann::json to_json(const TargetRecord& record);
nlohmann::json to_json(const SweepResult& result);
SweepResult sweep_from_json(const nlohmann::json& j);

}  // namespace mgeo
