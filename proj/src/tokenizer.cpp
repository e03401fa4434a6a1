#include "q8llama/tokenizer.hpp"

#include <cstdio>
#include <limits>

#include "byte_io.hpp"
#include "q8llama/errors.hpp"
#include "q8llama/model.hpp"

namespace q8llama {

namespace {

// Parses "<0xXX>" into its byte value, or returns -1.
int parse_byte_piece(std::string_view p) {
    if (p.size() != 6 || p.substr(0, 3) != "<0x" || p[5] != '>') {
        return -1;
    }
    auto hex = [](char ch) -> int {
        if (ch >= '0' && ch <= '9') return ch - '0';
        if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
        if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
        return -1;
    };
    const int hi = hex(p[3]);
    const int lo = hex(p[4]);
    if (hi < 0 || lo < 0) {
        return -1;
    }
    return hi * 16 + lo;
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> vocab, std::vector<float> scores, int max_token_length)
    : vocab_(std::move(vocab)), scores_(std::move(scores)), max_token_length_(max_token_length) {
    if (vocab_.size() != scores_.size()) {
        throw FormatError("tokenizer: vocab and score counts differ");
    }
    if (max_token_length_ < 0) {
        throw FormatError("tokenizer: negative max_token_length");
    }
    byte_tokens_.fill(-1);
    index_.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        const std::string& p = vocab_[i];
        if (p.size() > static_cast<std::size_t>(max_token_length_)) {
            throw FormatError("tokenizer: piece " + std::to_string(i) + " longer than max_token_length " +
                              std::to_string(max_token_length_));
        }
        index_.emplace(p, static_cast<int>(i));
        const int b = parse_byte_piece(p);
        if (b >= 0 && byte_tokens_[static_cast<std::size_t>(b)] < 0) {
            byte_tokens_[static_cast<std::size_t>(b)] = static_cast<int>(i);
        }
    }
    for (int b = 0; b < 256; ++b) {
        if (byte_tokens_[static_cast<std::size_t>(b)] < 0) {
            char name[8];
            std::snprintf(name, sizeof(name), "<0x%02X>", b);
            throw FormatError(std::string("tokenizer: missing byte-fallback piece ") + name);
        }
    }
}

Tokenizer Tokenizer::load(std::span<const std::byte> bytes, int vocab_size) {
    if (vocab_size <= 0) {
        throw FormatError("tokenizer: vocab_size must be positive");
    }
    detail::ByteReader in(bytes);
    const auto max_len = in.read<std::int32_t>("max_token_length");
    if (max_len < 0) {
        throw FormatError("tokenizer: negative max_token_length");
    }
    std::vector<std::string> vocab;
    std::vector<float> scores;
    vocab.reserve(static_cast<std::size_t>(vocab_size));
    scores.reserve(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < vocab_size; ++i) {
        scores.push_back(in.read<float>("token score"));
        const auto len = in.read<std::int32_t>("token length");
        if (len < 0 || len > max_len) {
            throw FormatError("tokenizer: token " + std::to_string(i) + " has length " + std::to_string(len) +
                              " outside [0, " + std::to_string(max_len) + "]");
        }
        std::string piece(static_cast<std::size_t>(len), '\0');
        in.read_array(std::span<char>(piece.data(), piece.size()), "token bytes");
        vocab.push_back(std::move(piece));
    }
    return Tokenizer(std::move(vocab), std::move(scores), max_len);
}

std::vector<std::byte> Tokenizer::serialize() const {
    detail::ByteWriter out;
    out.write<std::int32_t>(max_token_length_);
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        out.write<float>(scores_[i]);
        out.write<std::int32_t>(static_cast<std::int32_t>(vocab_[i].size()));
        out.write_array(std::span<const char>(vocab_[i].data(), vocab_[i].size()));
    }
    return out.take();
}

const std::string& Tokenizer::piece(int token) const {
    if (token < 0 || token >= vocab_size()) {
        throw RangeError("token id " + std::to_string(token) + " outside vocabulary of " +
                         std::to_string(vocab_size()));
    }
    return vocab_[static_cast<std::size_t>(token)];
}

float Tokenizer::score(int token) const {
    piece(token);
    return scores_[static_cast<std::size_t>(token)];
}

int Tokenizer::lookup(std::string_view p) const {
    const auto it = index_.find(std::string(p));
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> Tokenizer::encode(std::string_view text, bool add_bos, bool add_eos) const {
    std::vector<int> body;
    body.reserve(text.size() + 1);

    if (!text.empty()) {
        const int space = lookup(" ");
        body.push_back(space >= 0 ? space : byte_tokens_[' ']);
    }

    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t len = 1;
        while (i + len < text.size() && len < 4 &&
               (static_cast<unsigned char>(text[i + len]) & 0xC0) == 0x80) {
            ++len;
        }
        const std::string_view cp = text.substr(i, len);
        const int id = lookup(cp);
        if (id >= 0) {
            body.push_back(id);
        } else {
            for (char ch : cp) {
                body.push_back(byte_tokens_[static_cast<unsigned char>(ch)]);
            }
        }
        i += len;
    }

    std::string merged;
    while (body.size() >= 2) {
        float best_score = -std::numeric_limits<float>::infinity();
        int best_id = -1;
        std::size_t best_idx = 0;
        for (std::size_t k = 0; k + 1 < body.size(); ++k) {
            merged.assign(vocab_[static_cast<std::size_t>(body[k])]);
            merged.append(vocab_[static_cast<std::size_t>(body[k + 1])]);
            const int id = lookup(merged);
            if (id >= 0 && scores_[static_cast<std::size_t>(id)] > best_score) {
                best_score = scores_[static_cast<std::size_t>(id)];
                best_id = id;
                best_idx = k;
            }
        }
        if (best_id < 0) {
            break;
        }
        body[best_idx] = best_id;
        body.erase(body.begin() + static_cast<std::ptrdiff_t>(best_idx) + 1);
    }

    std::vector<int> tokens;
    tokens.reserve(body.size() + 2);
    if (add_bos) {
        tokens.push_back(kBosToken);
    }
    tokens.insert(tokens.end(), body.begin(), body.end());
    if (add_eos) {
        tokens.push_back(kEosToken);
    }
    return tokens;
}

std::string Tokenizer::decode(int prev_token, int token) const {
    std::string_view p = piece(token);
    if (prev_token == kBosToken && !p.empty() && p.front() == ' ') {
        p.remove_prefix(1);
    }
    const int b = parse_byte_piece(p);
    if (b >= 0) {
        return std::string(1, static_cast<char>(b));
    }
    return std::string(p);
}

std::string Tokenizer::decode_all(std::span<const int> tokens) const {
    std::string out;
    int prev = -1;
    for (int t : tokens) {
        if (t != kBosToken && t != kEosToken) {
            out += decode(prev, t);
        }
        prev = t;
    }
    return out;
}

}  // namespace q8llama
