#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "xdlm/kernel.hpp"

namespace xdlm {

// Byte-level character vocabulary.  The distinct bytes of the source text,
// sorted ascending, get ids 0 .. c-1; the mask token is appended as id c, so
// the modeled vocabulary size is c + 1 with the mask last.
struct char_vocab {
    std::vector<unsigned char> id_to_char;  // size n - 1
    std::array<int, 256> char_to_id{};      // -1 where the byte is absent
    int mask_id = 0;
    int n = 0;  // vocabulary size including mask
};

char_vocab build_vocab(std::string_view text);

// Maps every byte to its id; errors on bytes outside the vocabulary.
token_seq tokenize(std::string_view text, const char_vocab& vocab);

// Tokenizes and splits into consecutive windows of exactly seq_len tokens,
// dropping the partial tail.
std::vector<token_seq> pack(std::string_view text, const char_vocab& vocab, int seq_len);

// Inverse of tokenize; the mask token renders as "[MASK]".
std::string detokenize(const token_seq& tokens, const char_vocab& vocab);

// JSON persistence: {"chars": "...", "mask_id": n-1}.  Bytes are stored as a
// Latin-1-escaped JSON string so arbitrary bytes round-trip.
std::string vocab_to_json(const char_vocab& vocab);
char_vocab vocab_from_json(const std::string& json_text);
void save_vocab(const char_vocab& vocab, const std::string& path);
char_vocab load_vocab(const std::string& path);

}  // namespace xdlm
