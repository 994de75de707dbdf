#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cupcur/model.hpp"

namespace cupcur {

// Word-level vocabulary built from the training split only. Ids are assigned
// specials-first, then by descending frequency with lexicographic
// tie-breaking, so the mapping is deterministic given corpus and cutoffs.
class Vocabulary {
public:
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kEos = "<eos>";

    // max_size caps the total vocabulary (including specials); min_freq drops
    // rarer tokens to <unk>. add_eos reserves an end-of-line token.
    static Vocabulary build(const std::vector<std::string>& train_lines, std::int64_t max_size,
                            std::int64_t min_freq, bool add_eos);

    std::int32_t unk_id() const { return unk_id_; }
    std::int32_t eos_id() const { return eos_id_; }  // -1 when absent
    std::int64_t size() const { return static_cast<std::int64_t>(id_to_token_.size()); }

    std::int32_t lookup(const std::string& token) const;
    const std::string& token(std::int32_t id) const;

    // Appends the line's token ids (plus <eos> if configured).
    void encode_line(const std::string& line, std::vector<std::int32_t>& out) const;

    // One "token<TAB>id" line per entry, in id order.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, std::int32_t> token_to_id_;
    std::int32_t unk_id_ = 0;
    std::int32_t eos_id_ = -1;
};

struct TokenStream {
    std::string split;  // train | valid | test
    std::vector<std::int32_t> ids;
};

struct DataSet {
    Vocabulary vocab;
    TokenStream train;
    TokenStream valid;
    TokenStream test;
};

struct DataConfig {
    std::string path;                      // single corpus file, split by line blocks
    std::string train_path, valid_path, test_path;  // or explicit per-split files
    double train_frac = 0.8;
    double valid_frac = 0.1;
    std::int64_t max_vocab = 4096;
    std::int64_t min_freq = 1;
    bool add_eos = true;
    std::int64_t batch_size = 16;
    std::int64_t seq_len = 32;
    bool shuffle = true;  // shuffle batch order each epoch (seed-deterministic)
};

std::vector<std::string> read_lines(const std::string& path);

// Loads and tokenizes a corpus. With a single path the line list is split
// into contiguous train/valid/test blocks by the configured fractions.
DataSet load_corpus(const DataConfig& cfg);

// Contiguous non-overlapping (input, target) windows; targets are inputs
// shifted by one. Emits exactly floor((len-1)/(batch*seq)) full batches and
// drops the remainder. Batch order here is canonical; training shuffles
// indices with a seeded stream.
std::vector<Batch> batchify(const TokenStream& stream, std::int64_t batch_size, std::int64_t seq_len);

}  // namespace cupcur
