#include "isoprune/schedule.hpp"

#include <charconv>
#include <stdexcept>
#include <system_error>

namespace isoprune {

namespace {

void fail(std::string_view text, const std::string& why) {
    throw std::invalid_argument("parse_schedule: " + why + " in \"" + std::string(text) + "\"");
}

// Consumes a base-10 integer at the front of `rest`.
int take_int(std::string_view text, std::string_view& rest, const char* what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
    if (ec != std::errc() || ptr == rest.data()) {
        fail(text, std::string("malformed ") + what);
    }
    rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
    return value;
}

// Consumes a fixed-notation decimal at the front of `rest`. The grammar uses
// decimal learning rates, so scientific notation is rejected.
double take_decimal(std::string_view text, std::string_view& rest) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value,
                                           std::chars_format::fixed);
    if (ec != std::errc() || ptr == rest.data()) {
        fail(text, "malformed learning rate");
    }
    rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
    return value;
}

void take_literal(std::string_view text, std::string_view& rest, std::string_view literal) {
    if (!rest.starts_with(literal)) {
        fail(text, "expected \"" + std::string(literal) + "\"");
    }
    rest.remove_prefix(literal.size());
}

void skip_spaces(std::string_view& rest) {
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
}

}  // namespace

LrSchedule parse_schedule(std::string_view text) {
    std::string_view rest = text;
    LrSchedule schedule;

    schedule.total_epochs = take_int(text, rest, "epoch count");
    if (schedule.total_epochs <= 0) fail(text, "epoch count must be positive");
    take_literal(text, rest, " epochs,");
    skip_spaces(rest);

    while (true) {
        const int epoch = take_int(text, rest, "breakpoint epoch");
        take_literal(text, rest, ":");
        const double lr = take_decimal(text, rest);

        if (schedule.breakpoints.empty() && epoch != 0) {
            fail(text, "first breakpoint must be epoch 0");
        }
        if (!schedule.breakpoints.empty() && epoch <= schedule.breakpoints.back().first) {
            fail(text, "breakpoint epochs must be strictly ascending");
        }
        if (epoch >= schedule.total_epochs) {
            fail(text, "breakpoint epoch " + std::to_string(epoch) +
                           " is not below the total epoch count");
        }
        if (lr <= 0.0) fail(text, "learning rate must be positive");
        schedule.breakpoints.emplace_back(epoch, lr);

        if (rest.empty()) break;
        take_literal(text, rest, ",");
        skip_spaces(rest);
    }
    return schedule;
}

double lr_at(const LrSchedule& schedule, int epoch) {
    if (epoch < 0 || epoch >= schedule.total_epochs) {
        throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(schedule.total_epochs) + ")");
    }
    double lr = schedule.breakpoints.front().second;
    for (const auto& [e, rate] : schedule.breakpoints) {
        if (e > epoch) break;
        lr = rate;
    }
    return lr;
}

std::string to_string(const LrSchedule& schedule) {
    std::string out = std::to_string(schedule.total_epochs) + " epochs, ";
    bool first = true;
    for (const auto& [epoch, lr] : schedule.breakpoints) {
        if (!first) out += ",";
        first = false;
        char buf[64];
        // Shortest fixed-notation form that round-trips, matching the grammar.
        const auto res = std::to_chars(buf, buf + sizeof(buf), lr, std::chars_format::fixed);
        out += std::to_string(epoch) + ":" + std::string(buf, res.ptr);
    }
    return out;
}

FinetuneSetting parse_finetune_setting(std::string_view text) {
    FinetuneSetting setting;
    std::string_view rest = text;
    constexpr std::string_view kPrefix = "OrthP, ";
    if (rest.starts_with(kPrefix)) {
        setting.orthp = true;
        rest.remove_prefix(kPrefix.size());
    }
    setting.schedule = parse_schedule(rest);
    return setting;
}

}  // namespace isoprune
