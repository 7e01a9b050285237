#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgeo/joint_attack.hpp"
#include "mgeo/ranker.hpp"

namespace mgeo {

/// Every knob a run can set. Keys of the JSON form are the long flag names.
struct RunConfig {
    std::string catalog;
    std::string ranker = "toy";
    std::string bridge_addr = "127.0.0.1:7788";
    double bridge_timeout = 120.0;  // seconds
    std::string kind = "joint";
    std::string target;
    std::uint64_t seed = 17;
    std::string out;
    int workers = 1;
    int max_products = 10;
    double mask_threshold = kDefaultBackgroundThreshold;

    int resolution = 32;
    int patch_size = 32;
    int embed_dim = 8;
    double temperature = 0.25;
    double text_weight = 1.0;
    double image_weight = 1.0;
    double interaction_weight = 2.0;

    int rounds = 3;
    int kt = 100;
    int ki = 300;
    double alpha = 1.0 / 255.0;
    double lambda_s = 5.0;
    double lambda_m = 5.0;
    double lambda_f = 0.1;
    double lambda_n = 1.0;
    int suffix_len = 12;
    double lr = 0.5;
    std::string init = "uniform";
    double w_fg = 2e-4;
    double w_bg = 1e-4;
    std::string banned = "top,must rank,recommend,recommended,best";

    std::string grid = "10,10;5,5;0,5;5,0;0,0";
    std::string replacement_text;
    std::string replacement_image;

    /// Throws ValidationError on the first inconsistent field.
    void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RankerConfig ranker_config(const RunConfig& config);
JointConfig joint_config(const RunConfig& config);
std::vector<std::string> split_phrases(const std::string& text);

/// Closest candidate by edit distance, or "" when nothing is near.
std::string suggest_flag(const std::string& unknown, const std::vector<std::string>& known);

/// Exit codes: 0 success, 1 usage error, 2 runtime abort.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mgeo
