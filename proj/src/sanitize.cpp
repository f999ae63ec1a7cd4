#include "trsd/sanitize.hpp"

#include <algorithm>

#include "trsd/errors.hpp"

namespace trsd {

namespace {

bool is_tag(TokenId t) {
    return t >= Vocab::kThinkOpen && t <= Vocab::kAnswerClose;
}

void add_flag(std::vector<SanitizeFlag>& actions, SanitizeFlag f) {
    if (std::find(actions.begin(), actions.end(), f) == actions.end()) {
        actions.push_back(f);
    }
}

// removes tag tokens from a body; returns true if anything was removed
bool strip_tags(TokenSeq& body) {
    const size_t before = body.size();
    body.erase(std::remove_if(body.begin(), body.end(), is_tag), body.end());
    return body.size() != before;
}

TokenSeq run_forcer(const Forcer& forcer, const TokenSeq& context,
                    std::vector<SanitizeFlag>& actions) {
    add_flag(actions, SanitizeFlag::FORCED_ANSWER);
    TokenSeq forced = forcer(context);
    if (static_cast<int>(forced.size()) > kAnswerForceBudget) {
        throw ForcerBudgetViolation("forcer returned " + std::to_string(forced.size()) +
                                    " tokens, budget is " +
                                    std::to_string(kAnswerForceBudget));
    }
    const auto ac = std::find(forced.begin(), forced.end(), Vocab::kAnswerClose);
    if (ac == forced.end()) {
        add_flag(actions, SanitizeFlag::APPENDED_ANSWER_CLOSE);
        return forced;
    }
    return TokenSeq(forced.begin(), ac);  // body only; anything past </answer> ignored
}

}  // namespace

SanitizeReport sanitize(const RawGeneration& raw, const TokenSeq& prompt, const Forcer& forcer) {
    std::vector<SanitizeFlag> actions;
    TokenSeq g = raw.tokens;

    // leading control tokens do not count against "begins with <think>"
    size_t lead = 0;
    while (lead < g.size() && (g[lead] == Vocab::kBos || g[lead] == Vocab::kPad)) {
        ++lead;
    }
    g.erase(g.begin(), g.begin() + static_cast<long>(lead));

    if (g.empty() || g[0] != Vocab::kThinkOpen) {
        g.insert(g.begin(), Vocab::kThinkOpen);
        add_flag(actions, SanitizeFlag::PREPENDED_THINK);
    }
    if (std::find(g.begin() + 1, g.end(), Vocab::kThinkClose) == g.end()) {
        g.push_back(Vocab::kThinkClose);
        add_flag(actions, SanitizeFlag::APPENDED_THINK_CLOSE);
    }

    size_t tc = g.size();  // index of the final </think>
    for (size_t i = g.size(); i-- > 1;) {
        if (g[i] == Vocab::kThinkClose) {
            tc = i;
            break;
        }
    }

    TokenSeq think_body(g.begin() + 1, g.begin() + static_cast<long>(tc));
    if (strip_tags(think_body)) {
        add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
    }
    const TokenSeq tail(g.begin() + static_cast<long>(tc) + 1, g.end());

    auto context_for_forcing = [&](const TokenSeq& partial_answer) {
        TokenSeq ctx = prompt;
        ctx.push_back(Vocab::kThinkOpen);
        ctx.insert(ctx.end(), think_body.begin(), think_body.end());
        ctx.push_back(Vocab::kThinkClose);
        ctx.push_back(Vocab::kAnswerOpen);
        ctx.insert(ctx.end(), partial_answer.begin(), partial_answer.end());
        return ctx;
    };

    TokenSeq answer_body;
    const auto ao_it = std::find(tail.begin(), tail.end(), Vocab::kAnswerOpen);
    if (ao_it == tail.end()) {
        if (!tail.empty()) {
            add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
        }
        answer_body = run_forcer(forcer, context_for_forcing({}), actions);
    } else {
        if (ao_it != tail.begin()) {
            add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
        }
        const auto ac_it = std::find(ao_it + 1, tail.end(), Vocab::kAnswerClose);
        if (ac_it == tail.end()) {
            TokenSeq partial(ao_it + 1, tail.end());
            if (strip_tags(partial)) {
                add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
            }
            const TokenSeq forced = run_forcer(forcer, context_for_forcing(partial), actions);
            answer_body = partial;
            answer_body.insert(answer_body.end(), forced.begin(), forced.end());
        } else {
            answer_body.assign(ao_it + 1, ac_it);
            if (strip_tags(answer_body)) {
                add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
            }
            if (std::find(ac_it + 1, tail.end(), Vocab::kAnswerOpen) != tail.end()) {
                add_flag(actions, SanitizeFlag::KEPT_FIRST_ANSWER);
            } else if (ac_it + 1 != tail.end()) {
                add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
            }
        }
    }

    // forcer output may itself contain stray tags
    if (strip_tags(answer_body)) {
        add_flag(actions, SanitizeFlag::DROPPED_TRAILING);
    }

    SanitizeReport report;
    report.trace.prompt = prompt;
    report.trace.think_body = std::move(think_body);
    report.trace.answer_body = std::move(answer_body);
    report.forced =
        std::find(actions.begin(), actions.end(), SanitizeFlag::FORCED_ANSWER) != actions.end();
    report.trace.forced_answer = report.forced;
    report.trace.sanitizer_flags = actions;
    report.actions = std::move(actions);
    return report;
}

}  // namespace trsd
