#include "mbk/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mbk {

namespace {

/// Sparse per-state successor table: a handful of favored successors absorb
/// most of the probability mass, the rest is uniform noise.
struct MarkovTable {
    std::int64_t content = 0;  // number of content tokens
    std::vector<std::int32_t> favored;  // [content, kFavored]
    static constexpr int kFavored = 3;
    static constexpr double kFavoredMass = 0.9;

    std::int32_t sample(std::int32_t prev, Rng& rng) const {
        const auto state = static_cast<std::int64_t>(prev - kFirstContentId);
        if (rng.next_unit() < kFavoredMass) {
            const auto pick = rng.next_range(0, kFavored);
            return favored[static_cast<std::size_t>(state * kFavored + pick)];
        }
        return static_cast<std::int32_t>(rng.next_range(kFirstContentId,
                                                        kFirstContentId + content));
    }
};

MarkovTable build_table(std::uint64_t seed, std::int64_t vocab_size) {
    MarkovTable t;
    t.content = vocab_size - kFirstContentId;
    t.favored.resize(static_cast<std::size_t>(t.content * MarkovTable::kFavored));
    auto rng = Rng::stream(seed, "markov-table");
    for (auto& v : t.favored) {
        v = static_cast<std::int32_t>(rng.next_range(kFirstContentId, vocab_size));
    }
    return t;
}

}  // namespace

Corpus generate_corpus(std::uint64_t seed, std::int64_t vocab_size, std::int64_t num_docs) {
    if (vocab_size < 16) {
        throw ConfigError("generate_corpus: vocab_size must be at least 16");
    }
    if (num_docs < 1) {
        throw ConfigError("generate_corpus: num_docs must be positive");
    }
    Corpus corpus;
    corpus.vocab.reserve(static_cast<std::size_t>(vocab_size));
    corpus.vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    for (std::int64_t i = kFirstContentId; i < vocab_size; ++i) {
        corpus.vocab.push_back("tok" + std::to_string(i));
    }

    const auto table = build_table(seed, vocab_size);
    auto rng = Rng::stream(seed, "corpus");
    corpus.docs.resize(static_cast<std::size_t>(num_docs));
    for (auto& doc : corpus.docs) {
        const std::int64_t sentences = rng.next_range(6, 14);
        doc.resize(static_cast<std::size_t>(sentences));
        auto token = static_cast<std::int32_t>(rng.next_range(kFirstContentId, vocab_size));
        for (auto& sentence : doc) {
            const std::int64_t len = rng.next_range(5, 13);
            sentence.reserve(static_cast<std::size_t>(len));
            for (std::int64_t j = 0; j < len; ++j) {
                token = table.sample(token, rng);
                sentence.push_back(token);
            }
        }
    }
    return corpus;
}

std::vector<std::int32_t> PretrainBatch::tokens_of(std::int64_t b) const {
    const auto begin = token_ids.begin() + b * seq_len;
    return {begin, begin + seq_len};
}

std::vector<std::int32_t> PretrainBatch::segments_of(std::int64_t b) const {
    const auto begin = segment_ids.begin() + b * seq_len;
    return {begin, begin + seq_len};
}

std::vector<std::uint8_t> PretrainBatch::mask_of(std::int64_t b) const {
    const auto begin = attention_mask.begin() + b * seq_len;
    return {begin, begin + seq_len};
}

PretrainBatch make_batch(const Corpus& corpus, std::int64_t batch, std::int64_t seq_len,
                         std::uint64_t seed) {
    if (seq_len < 8) {
        throw ConfigError("make_batch: seq_len must be at least 8");
    }
    if (batch < 1) {
        throw ConfigError("make_batch: batch must be positive");
    }
    std::int64_t usable_pairs = 0;
    for (const auto& doc : corpus.docs) {
        usable_pairs += std::max<std::int64_t>(0, static_cast<std::int64_t>(doc.size()) - 1);
    }
    if (usable_pairs < batch) {
        throw DataError("make_batch: corpus has only " + std::to_string(usable_pairs) +
                        " sentence pairs, need " + std::to_string(batch));
    }

    auto rng = Rng::stream(seed, "batch");
    PretrainBatch out;
    out.batch = batch;
    out.seq_len = seq_len;
    out.token_ids.assign(static_cast<std::size_t>(batch * seq_len), kPadId);
    out.segment_ids.assign(static_cast<std::size_t>(batch * seq_len), 0);
    out.attention_mask.assign(static_cast<std::size_t>(batch * seq_len), 0);
    out.mlm_positions.resize(static_cast<std::size_t>(batch));
    out.mlm_labels.resize(static_cast<std::size_t>(batch));
    out.nsp_labels.resize(static_cast<std::size_t>(batch));

    const auto num_docs = static_cast<std::int64_t>(corpus.docs.size());
    for (std::int64_t b = 0; b < batch; ++b) {
        // Pick an adjacent sentence pair; half the time swap B for a random
        // sentence from elsewhere.
        std::int64_t doc_idx = rng.next_range(0, num_docs);
        while (corpus.docs[static_cast<std::size_t>(doc_idx)].size() < 2) {
            doc_idx = rng.next_range(0, num_docs);
        }
        const auto& doc = corpus.docs[static_cast<std::size_t>(doc_idx)];
        const std::int64_t s = rng.next_range(0, static_cast<std::int64_t>(doc.size()) - 1);
        std::vector<std::int32_t> a = doc[static_cast<std::size_t>(s)];
        std::vector<std::int32_t> bseq;
        const bool is_next = rng.next_bool();
        if (is_next) {
            bseq = doc[static_cast<std::size_t>(s + 1)];
        } else {
            const std::int64_t other = rng.next_range(0, num_docs);
            const auto& odoc = corpus.docs[static_cast<std::size_t>(other)];
            bseq = odoc[static_cast<std::size_t>(
                rng.next_range(0, static_cast<std::int64_t>(odoc.size())))];
        }
        out.nsp_labels[static_cast<std::size_t>(b)] = is_next ? 1 : 0;

        // Truncate the longer side first until [CLS] A [SEP] B [SEP] fits.
        std::int64_t budget = seq_len - 3;
        while (static_cast<std::int64_t>(a.size() + bseq.size()) > budget) {
            if (a.size() >= bseq.size()) {
                a.pop_back();
            } else {
                bseq.pop_back();
            }
        }

        std::int32_t* row = out.token_ids.data() + b * seq_len;
        std::int32_t* seg = out.segment_ids.data() + b * seq_len;
        std::uint8_t* msk = out.attention_mask.data() + b * seq_len;
        std::int64_t pos = 0;
        std::vector<std::int64_t> maskable;
        row[pos] = kClsId;
        seg[pos++] = 0;
        for (auto tok : a) {
            maskable.push_back(pos);
            row[pos] = tok;
            seg[pos++] = 0;
        }
        row[pos] = kSepId;
        seg[pos++] = 0;
        for (auto tok : bseq) {
            maskable.push_back(pos);
            row[pos] = tok;
            seg[pos++] = 1;
        }
        row[pos] = kSepId;
        seg[pos++] = 1;
        for (std::int64_t t = 0; t < pos; ++t) {
            msk[t] = 1;
        }

        // 15% of valid tokens, floor, at least one.
        const auto valid = static_cast<std::int64_t>(maskable.size());
        const std::int64_t n_mask =
            std::max<std::int64_t>(1, static_cast<std::int64_t>(0.15 * static_cast<double>(valid)));
        for (std::int64_t i = 0; i < n_mask; ++i) {
            const std::int64_t pick = rng.next_range(i, valid);
            std::swap(maskable[static_cast<std::size_t>(i)],
                      maskable[static_cast<std::size_t>(pick)]);
        }
        auto& positions = out.mlm_positions[static_cast<std::size_t>(b)];
        auto& labels = out.mlm_labels[static_cast<std::size_t>(b)];
        for (std::int64_t i = 0; i < n_mask; ++i) {
            const std::int64_t p = maskable[static_cast<std::size_t>(i)];
            positions.push_back(p);
            labels.push_back(row[p]);
            const double u = rng.next_unit();
            if (u < 0.8) {
                row[p] = kMaskId;
            } else if (u < 0.9) {
                row[p] = static_cast<std::int32_t>(
                    rng.next_range(kFirstContentId, corpus.vocab_size()));
            }  // else keep the original token
        }
    }
    return out;
}

std::pair<std::int32_t, double> unigram_majority(const Corpus& corpus) {
    std::vector<std::int64_t> counts(corpus.vocab.size(), 0);
    std::int64_t total = 0;
    for (const auto& doc : corpus.docs) {
        for (const auto& sentence : doc) {
            for (auto tok : sentence) {
                ++counts[static_cast<std::size_t>(tok)];
                ++total;
            }
        }
    }
    const auto it = std::max_element(counts.begin(), counts.end());
    const auto tok = static_cast<std::int32_t>(it - counts.begin());
    return {tok, total > 0 ? static_cast<double>(*it) / static_cast<double>(total) : 0.0};
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("save_corpus: cannot open " + path);
    }
    for (const auto& doc : corpus.docs) {
        for (std::size_t s = 0; s < doc.size(); ++s) {
            for (std::size_t j = 0; j < doc[s].size(); ++j) {
                if (j) {
                    out << ' ';
                }
                out << doc[s][j];
            }
            out << '\n';
        }
        out << '\n';  // blank line ends a document
    }
    nlohmann::json vocab = corpus.vocab;
    std::ofstream vout(path + ".vocab.json");
    if (!vout) {
        throw IoError("save_corpus: cannot open vocab sidecar for " + path);
    }
    vout << vocab.dump(2) << '\n';
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("load_corpus: cannot open " + path);
    }
    std::ifstream vin(path + ".vocab.json");
    if (!vin) {
        throw IoError("load_corpus: missing vocab sidecar for " + path);
    }
    Corpus corpus;
    nlohmann::json vocab = nlohmann::json::parse(vin, nullptr, false);
    if (vocab.is_discarded() || !vocab.is_array()) {
        throw IoError("load_corpus: invalid vocab sidecar");
    }
    corpus.vocab = vocab.get<std::vector<std::string>>();

    corpus.docs.emplace_back();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            if (!corpus.docs.back().empty()) {
                corpus.docs.emplace_back();
            }
            continue;
        }
        std::istringstream row(line);
        std::vector<std::int32_t> sentence;
        std::int32_t tok = 0;
        while (row >> tok) {
            sentence.push_back(tok);
        }
        corpus.docs.back().push_back(std::move(sentence));
    }
    if (corpus.docs.back().empty()) {
        corpus.docs.pop_back();
    }
    return corpus;
}

}  // namespace mbk
