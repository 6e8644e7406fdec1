// Synthetic topic corpus: one Markov chain per topic over a shared vocabulary.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace zdc {

using Sequence = std::vector<std::uint32_t>;

struct Topic {
    std::string name;
    std::vector<Sequence> sequences;
    bool operator==(const Topic&) const = default;
};

struct Corpus {
    std::size_t vocab = 0;
    std::vector<Topic> topics;

    std::size_t total_tokens() const {
        std::size_t n = 0;
        for (const auto& t : topics)
            for (const auto& s : t.sequences) n += s.size();
        return n;
    }

    void validate() const {
        for (const auto& t : topics) {
            if (t.sequences.empty()) throw std::invalid_argument("corpus: topic '" + t.name + "' is empty");
            for (const auto& s : t.sequences)
                for (auto id : s)
                    if (id >= vocab) throw std::invalid_argument("corpus: token id " + std::to_string(id) + " >= vocab");
        }
    }

    bool operator==(const Corpus&) const = default;
};

struct CorpusSpec {
    std::size_t vocab = 256;
    std::size_t topics = 8;
    std::size_t sequences_per_topic = 16;
    std::size_t min_len = 16;
    std::size_t max_len = 32;
    std::size_t successors = 6;  ///< non-zero transitions per state
    std::uint64_t seed = 1;
};

/// Each topic draws its own sparse transition table: every state moves to
/// `successors` random states with Dirichlet-like weights.
inline Corpus generate_corpus(const CorpusSpec& spec) {
    if (spec.vocab == 0 || spec.topics == 0 || spec.sequences_per_topic == 0) {
        throw std::invalid_argument("corpus spec: vocab, topics and sequences must be positive");
    }
    if (spec.min_len == 0 || spec.min_len > spec.max_len) throw std::invalid_argument("corpus spec: bad lengths");
    std::mt19937_64 rng(spec.seed);
    Corpus c;
    c.vocab = spec.vocab;
    const std::size_t succ = std::min(spec.successors, spec.vocab);
    for (std::size_t t = 0; t < spec.topics; ++t) {
        std::vector<std::vector<std::uint32_t>> next(spec.vocab);
        std::vector<std::discrete_distribution<std::size_t>> pick(spec.vocab);
        std::exponential_distribution<double> w(1.0);
        std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(spec.vocab - 1));
        for (std::size_t s = 0; s < spec.vocab; ++s) {
            std::vector<double> weights;
            for (std::size_t k = 0; k < succ; ++k) {
                next[s].push_back(any(rng));
                weights.push_back(w(rng));
            }
            pick[s] = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
        }
        Topic topic{"topic" + std::to_string(t), {}};
        std::uniform_int_distribution<std::size_t> len(spec.min_len, spec.max_len);
        for (std::size_t q = 0; q < spec.sequences_per_topic; ++q) {
            Sequence seq;
            const std::size_t n = len(rng);
            std::uint32_t cur = any(rng);
            for (std::size_t i = 0; i < n; ++i) {
                seq.push_back(cur);
                cur = next[cur][pick[cur](rng)];
            }
            topic.sequences.push_back(std::move(seq));
        }
        c.topics.push_back(std::move(topic));
    }
    return c;
}

/// Drops floor(ratio * n) sequences uniformly at random inside each topic,
/// keeping at least one. Surviving sequences keep their order.
inline Corpus prune_corpus(const Corpus& corpus, double drop_ratio, std::uint64_t seed) {
    if (!(drop_ratio >= 0.0 && drop_ratio < 1.0)) throw std::invalid_argument("prune ratio must be in [0,1)");
    std::mt19937_64 rng(seed);
    Corpus out;
    out.vocab = corpus.vocab;
    for (const auto& topic : corpus.topics) {
        const std::size_t n = topic.sequences.size();
        std::size_t drop = static_cast<std::size_t>(std::floor(drop_ratio * static_cast<double>(n)));
        if (n > 0 && drop >= n) drop = n - 1;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::size_t> keep(idx.begin() + static_cast<std::ptrdiff_t>(drop), idx.end());
        std::sort(keep.begin(), keep.end());
        Topic t{topic.name, {}};
        for (auto i : keep) t.sequences.push_back(topic.sequences[i]);
        out.topics.push_back(std::move(t));
    }
    return out;
}

inline void to_json(nlohmann::json& j, const Corpus& c) {
    nlohmann::json topics = nlohmann::json::array();
    for (const auto& t : c.topics) topics.push_back({{"name", t.name}, {"sequences", t.sequences}});
    j = nlohmann::json{{"vocab", c.vocab}, {"topics", topics}};
}

inline void from_json(const nlohmann::json& j, Corpus& c) {
    j.at("vocab").get_to(c.vocab);
    c.topics.clear();
    for (const auto& t : j.at("topics")) {
        c.topics.push_back({t.at("name").get<std::string>(), t.at("sequences").get<std::vector<Sequence>>()});
    }
    c.validate();
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& c) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << nlohmann::json(c).dump() << "\n";
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(is).get<Corpus>();
}

}  // namespace zdc
