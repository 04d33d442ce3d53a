#include "xdlm/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace xdlm {

namespace {

// chars holds raw bytes; JSON strings must be UTF-8, so each byte is stored
// as the Unicode codepoint of the same value (Latin-1 mapping).
std::string bytes_to_utf8(const std::vector<unsigned char>& bytes) {
    std::string out;
    for (unsigned char b : bytes) {
        if (b < 0x80) {
            out.push_back(static_cast<char>(b));
        } else {
            out.push_back(static_cast<char>(0xC0 | (b >> 6)));
            out.push_back(static_cast<char>(0x80 | (b & 0x3F)));
        }
    }
    return out;
}

std::vector<unsigned char> utf8_to_bytes(const std::string& text) {
    std::vector<unsigned char> out;
    for (std::size_t i = 0; i < text.size();) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            out.push_back(c);
            i += 1;
        } else if ((c & 0xE0) == 0xC0 && i + 1 < text.size()) {
            unsigned char c2 = static_cast<unsigned char>(text[i + 1]);
            unsigned int cp = (static_cast<unsigned int>(c & 0x1F) << 6) | (c2 & 0x3F);
            if (cp > 0xFF) throw std::invalid_argument("vocab: codepoint beyond byte range");
            out.push_back(static_cast<unsigned char>(cp));
            i += 2;
        } else {
            throw std::invalid_argument("vocab: invalid UTF-8 in chars field");
        }
    }
    return out;
}

char_vocab vocab_from_bytes(std::vector<unsigned char> bytes) {
    char_vocab v;
    v.id_to_char = std::move(bytes);
    v.char_to_id.fill(-1);
    for (std::size_t i = 0; i < v.id_to_char.size(); ++i) {
        unsigned char b = v.id_to_char[i];
        if (v.char_to_id[b] != -1) throw std::invalid_argument("vocab: duplicate character");
        if (i > 0 && !(v.id_to_char[i - 1] < b))
            throw std::invalid_argument("vocab: characters must be sorted ascending");
        v.char_to_id[b] = static_cast<int>(i);
    }
    v.mask_id = static_cast<int>(v.id_to_char.size());
    v.n = v.mask_id + 1;
    return v;
}

}  // namespace

char_vocab build_vocab(std::string_view text) {
    if (text.empty()) throw std::invalid_argument("build_vocab: empty text");
    std::array<bool, 256> seen{};
    for (char c : text) seen[static_cast<unsigned char>(c)] = true;
    std::vector<unsigned char> bytes;
    for (int b = 0; b < 256; ++b)
        if (seen[b]) bytes.push_back(static_cast<unsigned char>(b));
    return vocab_from_bytes(std::move(bytes));
}

token_seq tokenize(std::string_view text, const char_vocab& vocab) {
    token_seq out;
    out.reserve(text.size());
    for (char c : text) {
        int id = vocab.char_to_id[static_cast<unsigned char>(c)];
        if (id < 0)
            throw std::invalid_argument("tokenize: byte " + std::to_string(static_cast<unsigned char>(c)) +
                                        " is not in the vocabulary");
        out.push_back(id);
    }
    return out;
}

std::vector<token_seq> pack(std::string_view text, const char_vocab& vocab, int seq_len) {
    if (seq_len < 1) throw std::invalid_argument("pack: seq_len must be >= 1");
    token_seq all = tokenize(text, vocab);
    std::vector<token_seq> out;
    std::size_t len = static_cast<std::size_t>(seq_len);
    for (std::size_t start = 0; start + len <= all.size(); start += len)
        out.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(start),
                         all.begin() + static_cast<std::ptrdiff_t>(start + len));
    return out;
}

std::string detokenize(const token_seq& tokens, const char_vocab& vocab) {
    std::string out;
    for (token_id id : tokens) {
        if (id == vocab.mask_id) {
            out += "[MASK]";
        } else if (id >= 0 && id < vocab.mask_id) {
            out.push_back(static_cast<char>(vocab.id_to_char[static_cast<std::size_t>(id)]));
        } else {
            throw std::out_of_range("detokenize: token " + std::to_string(id) + " out of range");
        }
    }
    return out;
}

std::string vocab_to_json(const char_vocab& vocab) {
    nlohmann::json j;
    j["chars"] = bytes_to_utf8(vocab.id_to_char);
    j["mask_id"] = vocab.mask_id;
    return j.dump();
}

char_vocab vocab_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    char_vocab v = vocab_from_bytes(utf8_to_bytes(j.at("chars").get<std::string>()));
    int mask = j.at("mask_id").get<int>();
    if (mask != v.mask_id)
        throw std::invalid_argument("vocab: mask_id " + std::to_string(mask) +
                                    " does not match character count " + std::to_string(v.mask_id));
    return v;
}

void save_vocab(const char_vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("vocab: cannot open " + path + " for writing");
    out << vocab_to_json(vocab) << '\n';
    if (!out) throw std::runtime_error("vocab: write to " + path + " failed");
}

char_vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("vocab: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return vocab_from_json(text);
}

}  // namespace xdlm
