#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "trsd/errors.hpp"

namespace trsd {

using TokenId = int32_t;
using TokenSeq = std::vector<TokenId>;

// Sanitizer action flags, also carried by TaggedTrace.
enum class SanitizeFlag : uint8_t {
    PREPENDED_THINK,
    APPENDED_THINK_CLOSE,
    DROPPED_TRAILING,
    FORCED_ANSWER,
    APPENDED_ANSWER_CLOSE,
    KEPT_FIRST_ANSWER,
};

const char* to_string(SanitizeFlag f);
SanitizeFlag sanitize_flag_from_string(const std::string& s);

// Token alphabet plus the reserved tag/control tokens. Immutable once built;
// safe to share across threads.
class Vocab {
public:
    // Reserved ids, in fixed order at the front of the table.
    static constexpr TokenId kThinkOpen = 0;
    static constexpr TokenId kThinkClose = 1;
    static constexpr TokenId kAnswerOpen = 2;
    static constexpr TokenId kAnswerClose = 3;
    static constexpr TokenId kBos = 4;
    static constexpr TokenId kEos = 5;
    static constexpr TokenId kPad = 6;
    static constexpr int kNumReserved = 7;

    int size() const { return static_cast<int>(tokens_.size()); }

    const std::string& token(TokenId id) const;
    TokenId id(const std::string& token) const;  // throws UnknownToken
    bool contains(const std::string& token) const;

    bool is_tag(TokenId id) const { return id >= kThinkOpen && id <= kAnswerClose; }
    bool is_control(TokenId id) const { return id >= kBos && id <= kPad; }
    bool in_range(TokenId id) const { return id >= 0 && id < size(); }

    // Per-character encoding: every byte of `text` must be a vocab token.
    TokenSeq encode_text(const std::string& text) const;
    // Inverse of encode_text on alphabet tokens; tags/control render as their
    // full token strings.
    std::string decode_text(const TokenSeq& seq) const;

    // Tokens joined by single spaces (the on-disk rendering). No alphabet
    // token may contain a space, which build_vocab enforces.
    std::string render_tokens(const TokenSeq& seq) const;
    TokenSeq parse_tokens(const std::string& rendered) const;

    friend Vocab build_vocab(const std::vector<std::string>& task_alphabet);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

// Reserved tokens first, then the task alphabet in the given stable order.
Vocab build_vocab(const std::vector<std::string>& task_alphabet);

// A parsed generation: prompt · <think> r </think> <answer> y </answer>,
// with tags stripped from the stored bodies.
struct TaggedTrace {
    TokenSeq prompt;
    TokenSeq think_body;
    TokenSeq answer_body;
    bool forced_answer = false;
    std::vector<SanitizeFlag> sanitizer_flags;

    bool has_flag(SanitizeFlag f) const;
};

// Splits a well-formed sequence into the trace fields. Throws MalformedTrace
// if the tag pattern is violated or a body contains a tag token.
TaggedTrace parse_trace(const TokenSeq& seq, const Vocab& vocab);

// Inverse of parse_trace on its image.
TokenSeq serialize_trace(const TaggedTrace& trace, const Vocab& vocab);

// Trace interchange: one JSON object per line with fields
// {prompt, think, answer, forced_answer, flags}, tokens rendered as strings.
std::string trace_to_line(const TaggedTrace& trace, const Vocab& vocab);
TaggedTrace trace_from_line(const std::string& line, const Vocab& vocab);

}  // namespace trsd
