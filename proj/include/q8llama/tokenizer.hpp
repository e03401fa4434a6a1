#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace q8llama {

// Byte-pair tokenizer over the binary vocabulary format used by llama2.c
// style runners:
//   int32 max_token_length, then vocab_size records of
//   { fp32 score, int32 length, `length` raw bytes }   (little-endian)
// Pieces of the form "<0xXX>" are byte-fallback tokens; all 256 must exist.
class Tokenizer {
public:
    Tokenizer(std::vector<std::string> vocab, std::vector<float> scores, int max_token_length);

    static Tokenizer load(std::span<const std::byte> bytes, int vocab_size);
    std::vector<std::byte> serialize() const;

    // Greedy BPE: start from one token per UTF-8 code point (byte fallback
    // when a code point has no piece), then repeatedly merge the adjacent pair
    // whose concatenation has the highest score; the leftmost pair wins ties.
    // Non-empty text gets a leading " " piece, as SentencePiece does.
    std::vector<int> encode(std::string_view text, bool add_bos, bool add_eos) const;

    // Piece for `token` given the previous token: a leading space is dropped
    // right after BOS and "<0xXX>" pieces decode to their single byte.
    std::string decode(int prev_token, int token) const;
    // Decodes a whole id sequence, stripping BOS/EOS markers.
    std::string decode_all(std::span<const int> tokens) const;

    int vocab_size() const { return static_cast<int>(vocab_.size()); }
    int max_token_length() const { return max_token_length_; }
    const std::string& piece(int token) const;
    float score(int token) const;
    int byte_token(unsigned char b) const { return byte_tokens_[b]; }
    // -1 when `piece` is not in the vocabulary.
    int lookup(std::string_view piece) const;

private:
    std::vector<std::string> vocab_;
    std::vector<float> scores_;
    int max_token_length_ = 0;
    std::unordered_map<std::string, int> index_;
    std::array<int, 256> byte_tokens_{};
};

}  // namespace q8llama
