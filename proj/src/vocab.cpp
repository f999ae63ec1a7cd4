#include "trsd/vocab.hpp"

#include <array>

#include <json.hpp>

namespace trsd {

namespace {

constexpr std::array<const char*, Vocab::kNumReserved> kReservedStrings = {
    "<think>", "</think>", "<answer>", "</answer>", "<bos>", "<eos>", "<pad>",
};

constexpr std::array<const char*, 6> kFlagNames = {
    "PREPENDED_THINK",       "APPENDED_THINK_CLOSE", "DROPPED_TRAILING",
    "FORCED_ANSWER",         "APPENDED_ANSWER_CLOSE", "KEPT_FIRST_ANSWER",
};

}  // namespace

const char* to_string(SanitizeFlag f) {
    return kFlagNames[static_cast<size_t>(f)];
}

SanitizeFlag sanitize_flag_from_string(const std::string& s) {
    for (size_t i = 0; i < kFlagNames.size(); ++i) {
        if (s == kFlagNames[i]) {
            return static_cast<SanitizeFlag>(i);
        }
    }
    throw Error("unknown sanitize flag: " + s);
}

const std::string& Vocab::token(TokenId id) const {
    if (!in_range(id)) {
        throw UnknownToken("token id out of range: " + std::to_string(id));
    }
    return tokens_[static_cast<size_t>(id)];
}

TokenId Vocab::id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) {
        throw UnknownToken("token not in vocab: '" + token + "'");
    }
    return it->second;
}

bool Vocab::contains(const std::string& token) const {
    return ids_.count(token) != 0;
}

TokenSeq Vocab::encode_text(const std::string& text) const {
    TokenSeq out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(id(std::string(1, c)));
    }
    return out;
}

std::string Vocab::decode_text(const TokenSeq& seq) const {
    std::string out;
    for (TokenId id : seq) {
        out += token(id);
    }
    return out;
}

std::string Vocab::render_tokens(const TokenSeq& seq) const {
    std::string out;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += token(seq[i]);
    }
    return out;
}

TokenSeq Vocab::parse_tokens(const std::string& rendered) const {
    TokenSeq out;
    size_t pos = 0;
    while (pos < rendered.size()) {
        size_t next = rendered.find(' ', pos);
        if (next == std::string::npos) {
            next = rendered.size();
        }
        out.push_back(id(rendered.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

Vocab build_vocab(const std::vector<std::string>& task_alphabet) {
    if (task_alphabet.empty()) {
        throw EmptyAlphabet("task alphabet is empty");
    }
    Vocab v;
    for (const char* s : kReservedStrings) {
        v.ids_.emplace(s, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.emplace_back(s);
    }
    for (const std::string& tok : task_alphabet) {
        if (tok.empty()) {
            throw DuplicateToken("empty token string in alphabet");
        }
        if (tok.find(' ') != std::string::npos) {
            throw ReservedCollision("token may not contain a space: '" + tok + "'");
        }
        for (const char* r : kReservedStrings) {
            if (tok == r) {
                throw ReservedCollision("alphabet token collides with reserved token: " + tok);
            }
        }
        auto [it, inserted] = v.ids_.emplace(tok, static_cast<TokenId>(v.tokens_.size()));
        (void)it;
        if (!inserted) {
            throw DuplicateToken("duplicate token in alphabet: " + tok);
        }
        v.tokens_.push_back(tok);
    }
    return v;
}

bool TaggedTrace::has_flag(SanitizeFlag f) const {
    for (SanitizeFlag g : sanitizer_flags) {
        if (g == f) {
            return true;
        }
    }
    return false;
}

TaggedTrace parse_trace(const TokenSeq& seq, const Vocab& vocab) {
    for (TokenId id : seq) {
        if (!vocab.in_range(id)) {
            throw MalformedTrace("token id out of vocab range");
        }
    }
    size_t i = 0;
    TaggedTrace t;
    while (i < seq.size() && !vocab.is_tag(seq[i])) {
        t.prompt.push_back(seq[i]);
        ++i;
    }
    if (i >= seq.size() || seq[i] != Vocab::kThinkOpen) {
        throw MalformedTrace("expected <think> after prompt");
    }
    ++i;
    while (i < seq.size() && !vocab.is_tag(seq[i])) {
        t.think_body.push_back(seq[i]);
        ++i;
    }
    if (i >= seq.size() || seq[i] != Vocab::kThinkClose) {
        throw MalformedTrace("expected </think> after think body");
    }
    ++i;
    if (i >= seq.size() || seq[i] != Vocab::kAnswerOpen) {
        throw MalformedTrace("expected <answer> after </think>");
    }
    ++i;
    while (i < seq.size() && !vocab.is_tag(seq[i])) {
        t.answer_body.push_back(seq[i]);
        ++i;
    }
    if (i >= seq.size() || seq[i] != Vocab::kAnswerClose) {
        throw MalformedTrace("expected </answer> after answer body");
    }
    ++i;
    if (i != seq.size()) {
        throw MalformedTrace("trailing tokens after </answer>");
    }
    return t;
}

TokenSeq serialize_trace(const TaggedTrace& trace, const Vocab& vocab) {
    for (const TokenSeq* body : {&trace.prompt, &trace.think_body, &trace.answer_body}) {
        for (TokenId id : *body) {
            if (!vocab.in_range(id)) {
                throw MalformedTrace("token id out of vocab range");
            }
            if (vocab.is_tag(id)) {
                throw MalformedTrace("tag token inside a trace body");
            }
        }
    }
    TokenSeq out;
    out.reserve(trace.prompt.size() + trace.think_body.size() + trace.answer_body.size() + 4);
    out.insert(out.end(), trace.prompt.begin(), trace.prompt.end());
    out.push_back(Vocab::kThinkOpen);
    out.insert(out.end(), trace.think_body.begin(), trace.think_body.end());
    out.push_back(Vocab::kThinkClose);
    out.push_back(Vocab::kAnswerOpen);
    out.insert(out.end(), trace.answer_body.begin(), trace.answer_body.end());
    out.push_back(Vocab::kAnswerClose);
    return out;
}

std::string trace_to_line(const TaggedTrace& trace, const Vocab& vocab) {
    nlohmann::ordered_json j;
    j["prompt"] = vocab.render_tokens(trace.prompt);
    j["think"] = vocab.render_tokens(trace.think_body);
    j["answer"] = vocab.render_tokens(trace.answer_body);
    j["forced_answer"] = trace.forced_answer;
    auto flags = nlohmann::ordered_json::array();
    for (SanitizeFlag f : trace.sanitizer_flags) {
        flags.push_back(to_string(f));
    }
    j["flags"] = flags;
    return j.dump();
}

TaggedTrace trace_from_line(const std::string& line, const Vocab& vocab) {
    nlohmann::json j = nlohmann::json::parse(line);
    TaggedTrace t;
    t.prompt = vocab.parse_tokens(j.at("prompt").get<std::string>());
    t.think_body = vocab.parse_tokens(j.at("think").get<std::string>());
    t.answer_body = vocab.parse_tokens(j.at("answer").get<std::string>());
    t.forced_answer = j.at("forced_answer").get<bool>();
    for (const auto& f : j.at("flags")) {
        t.sanitizer_flags.push_back(sanitize_flag_from_string(f.get<std::string>()));
    }
    return t;
}

}  // namespace trsd
