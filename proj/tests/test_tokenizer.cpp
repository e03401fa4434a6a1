#include <random>

#include "doctest.h"
#include "q8llama/errors.hpp"
#include "q8llama/tokenizer.hpp"
#include "test_support.hpp"

using namespace q8llama;

namespace {

std::string random_bytes(std::mt19937_64& rng, std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> byte(0, 255);
    // Mostly ASCII from the merge alphabet, sometimes arbitrary bytes.
    const std::string alphabet = "abceht  ";
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::bernoulli_distribution raw(0.3);
    std::string s(len(rng), '\0');
    for (auto& ch : s) ch = raw(rng) ? static_cast<char>(byte(rng)) : alphabet[pick(rng)];
    return s;
}

}  // namespace

TEST_CASE("serialize then load yields identical vocabulary") {
    const Tokenizer t = testing::test_tokenizer();
    const auto bytes = t.serialize();
    const Tokenizer u = Tokenizer::load(bytes, t.vocab_size());
    REQUIRE(u.vocab_size() == t.vocab_size());
    CHECK(u.max_token_length() == t.max_token_length());
    for (int i = 0; i < t.vocab_size(); ++i) {
        CHECK(u.piece(i) == t.piece(i));
        CHECK(u.score(i) == t.score(i));
    }
    CHECK(u.serialize() == bytes);
}

TEST_CASE("load rejects malformed input") {
    const Tokenizer t = testing::test_tokenizer();
    auto bytes = t.serialize();

    CHECK_THROWS_AS(Tokenizer::load({}, t.vocab_size()), FormatError);
    CHECK_THROWS_AS(Tokenizer::load(std::span(bytes).first(bytes.size() - 1), t.vocab_size()), FormatError);
    CHECK_THROWS_AS(Tokenizer::load(bytes, t.vocab_size() + 1), FormatError);

    // Shrink max_token_length below the longest piece.
    auto shrunk = bytes;
    shrunk[0] = std::byte{1};
    CHECK_THROWS_AS(Tokenizer::load(shrunk, t.vocab_size()), FormatError);

    // Fewer than all 256 byte pieces.
    CHECK_THROWS_AS(Tokenizer::load(bytes, 100), FormatError);
}

TEST_CASE("empty text") {
    const Tokenizer t = testing::test_tokenizer();
    CHECK(t.encode("", true, false) == std::vector<int>{kBosToken});
    CHECK(t.encode("", false, false).empty());
    CHECK(t.encode("", true, true) == std::vector<int>{kBosToken, kEosToken});
}

TEST_CASE("highest scoring merge wins") {
    const Tokenizer t = testing::test_tokenizer();
    CHECK(t.encode("the", false, false) == std::vector<int>{t.lookup(" the")});
    CHECK(t.encode("abc", true, false) == std::vector<int>{kBosToken, t.lookup(" "), t.lookup("abc")});
    CHECK(t.encode("\xC3\xA9", false, false) == std::vector<int>{t.lookup(" "), t.lookup("\xC3\xA9")});
    CHECK(t.encode("z", false, false) == std::vector<int>{t.lookup(" "), t.byte_token('z')});
    CHECK(t.encode("the cab", false, false) == t.encode("the cab", false, false));
}

TEST_CASE("decode") {
    const Tokenizer t = testing::test_tokenizer();
    CHECK(t.decode(0, t.byte_token(0x41)) == "A");
    CHECK(t.decode(0, t.byte_token(0xFF)) == std::string(1, '\xFF'));
    CHECK(t.decode(0, t.lookup(" the")) == " the");
    CHECK(t.decode(kBosToken, t.lookup(" the")) == "the");
    CHECK(t.decode(0, t.lookup("\xC3\xA9")) == "\xC3\xA9");
    CHECK_THROWS_AS(t.decode(0, -1), RangeError);
    CHECK_THROWS_AS(t.decode(0, t.vocab_size()), RangeError);
}

TEST_CASE("property: decode inverts encode on random byte strings") {
    const Tokenizer t = testing::test_tokenizer();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::string s = random_bytes(rng, 40);
        const auto ids = t.encode(s, true, true);
        REQUIRE(t.decode_all(ids) == s);
        CHECK(t.decode_all(t.encode(s, false, false)) == (s.empty() ? s : " " + s));
    }
}
