#include "trsd/tasks.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "trsd/errors.hpp"
#include "trsd/rng.hpp"

namespace trsd {

const char* to_string(TaskKind k) {
    return k == TaskKind::CHAIN_ARITH ? "CHAIN_ARITH" : "MINI_COUNTDOWN";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "CHAIN_ARITH") {
        return TaskKind::CHAIN_ARITH;
    }
    if (s == "MINI_COUNTDOWN") {
        return TaskKind::MINI_COUNTDOWN;
    }
    throw Error("unknown task kind: " + s);
}

const std::vector<std::string>& task_alphabet() {
    static const std::vector<std::string> alphabet = [] {
        std::vector<std::string> a;
        for (char c : std::string("0123456789+-*/()=;,:")) {
            a.emplace_back(1, c);
        }
        return a;
    }();
    return alphabet;
}

const Vocab& task_vocab() {
    static const Vocab v = build_vocab(task_alphabet());
    return v;
}

// ---------------------------------------------------------------- generators

std::vector<std::pair<TaskInstance, ReferenceTrace>> gen_chain_arith(
    uint64_t seed, int difficulty, int count, int redundancy) {
    if (difficulty < 1 || count < 1 || redundancy < 1) {
        throw InvalidConfig("gen_chain_arith: difficulty, count, redundancy must be >= 1");
    }
    std::vector<std::pair<TaskInstance, ReferenceTrace>> out;
    out.reserve(static_cast<size_t>(count));
    for (int n = 0; n < count; ++n) {
        Rng rng(stream_key(seed, "chain_arith", static_cast<uint64_t>(difficulty),
                           static_cast<uint64_t>(n)));
        long long value = rng.range(0, 99);
        std::string expr = std::to_string(value);
        std::string think;
        for (int s = 0; s < difficulty; ++s) {
            const bool plus = rng.range(0, 1) == 0;
            const long long hi = plus ? std::min<long long>(99, 999 - value)
                                      : std::min<long long>(99, value);
            const long long operand = rng.range(0, static_cast<int>(hi));
            const long long next = plus ? value + operand : value - operand;
            const char op = plus ? '+' : '-';
            const std::string step = std::to_string(value) + op + std::to_string(operand) +
                                     "=" + std::to_string(next) + ";";
            for (int r = 0; r < redundancy; ++r) {
                think += step;
            }
            expr += op + std::to_string(operand);
            value = next;
        }
        TaskInstance inst;
        inst.kind = TaskKind::CHAIN_ARITH;
        inst.prompt_text = expr + "=";
        inst.gold_answer = std::to_string(value);
        inst.difficulty = difficulty;
        ReferenceTrace ref{inst, think, inst.gold_answer};
        out.emplace_back(std::move(inst), std::move(ref));
    }
    return out;
}

std::vector<std::pair<TaskInstance, ReferenceTrace>> gen_mini_countdown(
    uint64_t seed, int operand_count, int count, int redundancy) {
    if (operand_count != 3 && operand_count != 4) {
        throw InvalidConfig("gen_mini_countdown: operand_count must be 3 or 4");
    }
    if (count < 1 || redundancy < 1) {
        throw InvalidConfig("gen_mini_countdown: count and redundancy must be >= 1");
    }
    std::vector<std::pair<TaskInstance, ReferenceTrace>> out;
    out.reserve(static_cast<size_t>(count));
    for (int n = 0; n < count; ++n) {
        Rng rng(stream_key(seed, "mini_countdown", static_cast<uint64_t>(operand_count),
                           static_cast<uint64_t>(n)));
        std::vector<long long> operands;
        for (int i = 0; i < operand_count; ++i) {
            operands.push_back(rng.range(1, 25));
        }
        std::vector<int> order(operands.size());
        std::iota(order.begin(), order.end(), 0);
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.range(0, i))]);
        }

        long long value = operands[static_cast<size_t>(order[0])];
        std::string expr = std::to_string(value);
        std::string think;
        for (size_t s = 1; s < order.size(); ++s) {
            const long long a = operands[static_cast<size_t>(order[s])];
            // keep every intermediate (and the target) in [0, 999]; '+' can
            // only fail past 974, where '-' is valid, so `valid` is nonempty
            std::string valid;
            if (value + a <= 999) {
                valid += '+';
            }
            if (value - a >= 0) {
                valid += '-';
            }
            if (value * a <= 999) {
                valid += '*';
            }
            if (value % a == 0) {
                valid += '/';
            }
            const char op = valid[static_cast<size_t>(rng.range(0, static_cast<int>(valid.size()) - 1))];
            long long next = 0;
            switch (op) {
                case '+': next = value + a; break;
                case '-': next = value - a; break;
                case '*': next = value * a; break;
                default: next = value / a; break;
            }
            const std::string step = std::to_string(value) + op + std::to_string(a) + "=" +
                                     std::to_string(next) + ";";
            for (int r = 0; r < redundancy; ++r) {
                think += step;
            }
            expr = "(" + expr + op + std::to_string(a) + ")";
            value = next;
        }

        TaskInstance inst;
        inst.kind = TaskKind::MINI_COUNTDOWN;
        inst.prompt_text = std::to_string(value) + ":";
        for (size_t i = 0; i < operands.size(); ++i) {
            if (i > 0) {
                inst.prompt_text += ',';
            }
            inst.prompt_text += std::to_string(operands[i]);
        }
        inst.prompt_text += '=';
        inst.gold_answer = expr;
        inst.difficulty = operand_count;
        ReferenceTrace ref{inst, think, expr};
        out.emplace_back(std::move(inst), std::move(ref));
    }
    return out;
}

// ------------------------------------------------------- expression evaluator

namespace {

using Wide = __int128;

constexpr long long kMagnitudeCap = 1'000'000'000'000'000ll;

std::optional<RationalValue> make_rational(Wide num, Wide den) {
    if (den == 0) {
        return std::nullopt;
    }
    if (den < 0) {
        num = -num;
        den = -den;
    }
    Wide a = num < 0 ? -num : num;
    Wide b = den;
    while (b != 0) {
        Wide t = a % b;
        a = b;
        b = t;
    }
    if (a != 0) {
        num /= a;
        den /= a;
    }
    if (num > kMagnitudeCap || num < -kMagnitudeCap || den > kMagnitudeCap) {
        return std::nullopt;
    }
    return RationalValue{static_cast<long long>(num), static_cast<long long>(den)};
}

class ExprParser {
public:
    ExprParser(const std::string& text, std::vector<long long>* literals)
        : text_(text), literals_(literals) {}

    std::optional<RationalValue> run() {
        auto v = parse_expr();
        if (!v) {
            return std::nullopt;
        }
        skip_ws();
        if (pos_ != text_.size()) {
            return std::nullopt;  // trailing junk
        }
        return v;
    }

private:
    void skip_ws() {
        while (pos_ < text_.size() &&
               (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n')) {
            ++pos_;
        }
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::optional<RationalValue> parse_expr() {
        auto lhs = parse_term();
        while (lhs) {
            if (eat('+')) {
                lhs = apply('+', *lhs, parse_term());
            } else if (eat('-')) {
                lhs = apply('-', *lhs, parse_term());
            } else {
                break;
            }
        }
        return lhs;
    }

    std::optional<RationalValue> parse_term() {
        auto lhs = parse_factor();
        while (lhs) {
            if (eat('*')) {
                lhs = apply('*', *lhs, parse_factor());
            } else if (eat('/')) {
                lhs = apply('/', *lhs, parse_factor());
            } else {
                break;
            }
        }
        return lhs;
    }

    std::optional<RationalValue> parse_factor() {
        if (eat('-')) {
            auto v = parse_factor();
            if (!v) {
                return std::nullopt;
            }
            return RationalValue{-v->num, v->den};
        }
        if (eat('(')) {
            auto v = parse_expr();
            if (!v || !eat(')')) {
                return std::nullopt;
            }
            return v;
        }
        skip_ws();
        size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
            ++pos_;
        }
        if (pos_ == start || pos_ - start > 15) {
            return std::nullopt;
        }
        long long value = std::stoll(text_.substr(start, pos_ - start));
        if (literals_ != nullptr) {
            literals_->push_back(value);
        }
        return RationalValue{value, 1};
    }

    static std::optional<RationalValue> apply(char op, RationalValue a,
                                              std::optional<RationalValue> b) {
        if (!b) {
            return std::nullopt;
        }
        const Wide an = a.num, ad = a.den, bn = b->num, bd = b->den;
        switch (op) {
            case '+': return make_rational(an * bd + bn * ad, ad * bd);
            case '-': return make_rational(an * bd - bn * ad, ad * bd);
            case '*': return make_rational(an * bn, ad * bd);
            default:
                if (bn == 0) {
                    return std::nullopt;
                }
                return make_rational(an * bd, ad * bn);
        }
    }

    const std::string& text_;
    std::vector<long long>* literals_;
    size_t pos_ = 0;
};

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\n\r");
    if (a == std::string::npos) {
        return "";
    }
    size_t b = s.find_last_not_of(" \t\n\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::optional<RationalValue> eval_expression(const std::string& text,
                                             std::vector<long long>* literals_used) {
    return ExprParser(text, literals_used).run();
}

CountdownSpec parse_countdown_prompt(const std::string& prompt_text) {
    const size_t colon = prompt_text.find(':');
    const size_t eq = prompt_text.rfind('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon) {
        throw Error("bad countdown prompt: " + prompt_text);
    }
    CountdownSpec spec;
    spec.target = std::stoll(prompt_text.substr(0, colon));
    size_t pos = colon + 1;
    while (pos < eq) {
        size_t comma = prompt_text.find(',', pos);
        if (comma == std::string::npos || comma > eq) {
            comma = eq;
        }
        spec.operands.push_back(std::stoll(prompt_text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (spec.operands.empty()) {
        throw Error("countdown prompt has no operands: " + prompt_text);
    }
    return spec;
}

bool verify_answer(const TaskInstance& instance, const std::string& answer_text) {
    if (instance.kind == TaskKind::CHAIN_ARITH) {
        return trimmed(answer_text) == trimmed(instance.gold_answer);
    }
    CountdownSpec spec;
    try {
        spec = parse_countdown_prompt(instance.prompt_text);
    } catch (const Error&) {
        return false;
    }
    std::vector<long long> literals;
    auto value = eval_expression(answer_text, &literals);
    if (!value) {
        return false;
    }
    // each operand used at most once
    std::vector<long long> pool = spec.operands;
    for (long long lit : literals) {
        auto it = std::find(pool.begin(), pool.end(), lit);
        if (it == pool.end()) {
            return false;
        }
        pool.erase(it);
    }
    return value->den == 1 && value->num == spec.target;
}

// ------------------------------------------------------------- dataset files

std::string dataset_line(const TaskInstance& inst, const ReferenceTrace& ref) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(inst.kind);
    j["prompt"] = inst.prompt_text;
    j["gold"] = inst.gold_answer;
    j["difficulty"] = inst.difficulty;
    j["reference_think"] = ref.think_text;
    return j.dump();
}

std::pair<TaskInstance, ReferenceTrace> dataset_from_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    TaskInstance inst;
    inst.kind = task_kind_from_string(j.at("kind").get<std::string>());
    inst.prompt_text = j.at("prompt").get<std::string>();
    inst.gold_answer = j.at("gold").get<std::string>();
    inst.difficulty = j.at("difficulty").get<int>();
    ReferenceTrace ref{inst, j.at("reference_think").get<std::string>(), inst.gold_answer};
    return {inst, ref};
}

}  // namespace trsd
