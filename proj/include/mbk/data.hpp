#pragma once

#include <string>
#include <vector>

#include "mbk/common.hpp"

namespace mbk {

// Reserved token ids; the generator never emits them as content.
constexpr std::int32_t kPadId = 0;
constexpr std::int32_t kUnkId = 1;
constexpr std::int32_t kClsId = 2;
constexpr std::int32_t kSepId = 3;
constexpr std::int32_t kMaskId = 4;
constexpr std::int32_t kFirstContentId = 5;

struct Corpus {
    std::vector<std::string> vocab;                             // index == token id
    std::vector<std::vector<std::vector<std::int32_t>>> docs;   // doc -> sentence -> ids

    std::int64_t vocab_size() const { return static_cast<std::int64_t>(vocab.size()); }
};

/// Markov-chain token generator with a per-seed transition table, so
/// sentences carry learnable local structure. Deterministic per seed.
Corpus generate_corpus(std::uint64_t seed, std::int64_t vocab_size, std::int64_t num_docs);

struct PretrainBatch {
    std::int64_t batch = 0;
    std::int64_t seq_len = 0;
    std::vector<std::int32_t> token_ids;                     // [B,T] row-major
    std::vector<std::int32_t> segment_ids;                   // [B,T]
    std::vector<std::uint8_t> attention_mask;                // [B,T], 1 = attend
    std::vector<std::vector<std::int64_t>> mlm_positions;    // per sequence
    std::vector<std::vector<std::int64_t>> mlm_labels;       // original ids at those positions
    std::vector<std::int32_t> nsp_labels;                    // [B], 1 = true next sentence

    std::vector<std::int32_t> tokens_of(std::int64_t b) const;
    std::vector<std::int32_t> segments_of(std::int64_t b) const;
    std::vector<std::uint8_t> mask_of(std::int64_t b) const;
};

/// Builds one [CLS] A [SEP] B [SEP] batch with BERT-style masking: 15% of
/// valid tokens (floor, at least one) selected; of those 80% MASK, 10%
/// random content token, 10% unchanged. Half the pairs are true
/// next-sentence pairs. Deterministic in (corpus, B, T, seed).
PretrainBatch make_batch(const Corpus& corpus, std::int64_t batch, std::int64_t seq_len,
                         std::uint64_t seed);

/// Most frequent content token over the corpus and its relative frequency;
/// predicting it everywhere is the unigram-majority baseline.
std::pair<std::int32_t, double> unigram_majority(const Corpus& corpus);

/// Line-delimited token-id export with a JSON vocab sidecar at path + ".vocab.json".
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace mbk
