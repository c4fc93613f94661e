// Seeded gradient verification suite: finite-difference checks of the
// operator stack, models, and the full objective. Shared by the command-line
// gradcheck entry point and the acceptance harness.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace acwm::verify {

struct CheckOutcome {
    std::string name;
    uint64_t seed = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Runs every check once per seed (seeds base_seed .. base_seed + n_seeds - 1)
// at the given finite-difference tolerance. Outcomes are ordered by seed,
// then check name.
std::vector<CheckOutcome> gradient_suite(uint64_t base_seed, int64_t n_seeds, double tolerance);

bool all_pass(const std::vector<CheckOutcome>& outcomes);
nlohmann::json outcomes_json(const std::vector<CheckOutcome>& outcomes);

}  // namespace acwm::verify
