#pragma once

#include "mgeo/joint_attack.hpp"

// Settings shared by the golden generator and the tests that read its output.
namespace mgeo::test::golden {

inline constexpr std::uint64_t kBaseSeed = 17;
// Pre-attack rank of the listing used for single-target goldens.
inline constexpr int kTargetPreRank = 8;

inline JointConfig attack_config() {
    JointConfig c;
    c.rounds = 3;
    c.text.steps = 100;
    c.image.steps = 100;
    return c;
}

inline ImageAttackConfig image_config() {
    ImageAttackConfig c;
    c.steps = 300;
    return c;
}

// Smaller budgets for the multi-sweep goldens.
inline JointConfig ablation_config() {
    JointConfig c;
    c.rounds = 1;
    c.text.steps = 0;
    c.image.steps = 50;
    return c;
}

inline JointConfig category_config() {
    JointConfig c;
    c.rounds = 1;
    c.text.steps = 20;
    c.image.steps = 20;
    return c;
}

inline const char* ablation_grid() { return "10,10;5,5;0,5;5,0;0,0"; }

}  // namespace mgeo::test::golden
