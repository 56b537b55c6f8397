#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace isoprune {

// Step learning-rate schedule: "<N> epochs, <e0>:<lr0>[,<ei>:<lri>]*" with
// optional spaces after commas. Breakpoint epochs are strictly ascending,
// start at 0, and stay below the total; learning rates are positive decimals.
struct LrSchedule {
    int total_epochs = 0;
    std::vector<std::pair<int, double>> breakpoints;
};

LrSchedule parse_schedule(std::string_view text);

// LR of the last breakpoint at or before `epoch`; epoch must be in
// [0, total_epochs).
double lr_at(const LrSchedule& schedule, int epoch);

// Canonical text form; parse(to_string(s)) == s.
std::string to_string(const LrSchedule& schedule);

// A finetuning setting as written in the hypothesis grid: an optional
// "OrthP, " prefix followed by a schedule string.
struct FinetuneSetting {
    bool orthp = false;
    LrSchedule schedule;
};

FinetuneSetting parse_finetune_setting(std::string_view text);

}  // namespace isoprune
