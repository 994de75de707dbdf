#include "cupcur/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {

using i64 = std::int64_t;

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(std::move(tok));
    return out;
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& train_lines, i64 max_size,
                             i64 min_freq, bool add_eos) {
    if (train_lines.empty()) throw InputError("empty training corpus");
    std::map<std::string, i64> freq;  // ordered: lexicographic tie-break for free
    i64 token_count = 0;
    for (const auto& line : train_lines) {
        for (auto& tok : tokenize(line)) {
            ++freq[tok];
            ++token_count;
        }
    }
    if (token_count == 0) throw InputError("training corpus has no tokens");

    Vocabulary v;
    v.id_to_token_.push_back(kUnk);
    v.unk_id_ = 0;
    if (add_eos) {
        v.eos_id_ = static_cast<std::int32_t>(v.id_to_token_.size());
        v.id_to_token_.push_back(kEos);
    }

    std::vector<std::pair<std::string, i64>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [tok, count] : items) {
        if (count < min_freq) continue;
        if (static_cast<i64>(v.id_to_token_.size()) >= max_size) break;
        v.id_to_token_.push_back(tok);
    }
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        v.token_to_id_.emplace(v.id_to_token_[i], static_cast<std::int32_t>(i));
    }
    return v;
}

std::int32_t Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unk_id_ : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || id >= size()) throw IndexError("vocabulary id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocabulary::encode_line(const std::string& line, std::vector<std::int32_t>& out) const {
    for (const auto& tok : tokenize(line)) out.push_back(lookup(tok));
    if (eos_id_ >= 0) out.push_back(eos_id_);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write vocabulary to " + path);
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        os << id_to_token_[i] << '\t' << i << '\n';
    }
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot read vocabulary from " + path);
    Vocabulary v;
    v.id_to_token_.clear();
    v.eos_id_ = -1;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw InputError("malformed vocabulary line: " + line);
        v.id_to_token_.push_back(line.substr(0, tab));
    }
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        const auto& tok = v.id_to_token_[i];
        v.token_to_id_.emplace(tok, static_cast<std::int32_t>(i));
        if (tok == kUnk) v.unk_id_ = static_cast<std::int32_t>(i);
        if (tok == kEos) v.eos_id_ = static_cast<std::int32_t>(i);
    }
    return v;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open corpus file " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

DataSet load_corpus(const DataConfig& cfg) {
    std::vector<std::string> train_lines, valid_lines, test_lines;
    if (!cfg.train_path.empty()) {
        train_lines = read_lines(cfg.train_path);
        valid_lines = read_lines(cfg.valid_path);
        test_lines = read_lines(cfg.test_path);
    } else {
        if (cfg.path.empty()) throw InputError("no corpus path configured");
        if (cfg.train_frac <= 0.0 || cfg.valid_frac < 0.0 || cfg.train_frac + cfg.valid_frac >= 1.0) {
            throw ConfigError("invalid corpus split fractions");
        }
        auto lines = read_lines(cfg.path);
        if (lines.empty()) throw InputError("empty corpus file " + cfg.path);
        const auto n = static_cast<i64>(lines.size());
        const i64 n_train = static_cast<i64>(static_cast<double>(n) * cfg.train_frac);
        const i64 n_valid = static_cast<i64>(static_cast<double>(n) * cfg.valid_frac);
        train_lines.assign(lines.begin(), lines.begin() + n_train);
        valid_lines.assign(lines.begin() + n_train, lines.begin() + n_train + n_valid);
        test_lines.assign(lines.begin() + n_train + n_valid, lines.end());
    }

    DataSet ds;
    ds.vocab = Vocabulary::build(train_lines, cfg.max_vocab, cfg.min_freq, cfg.add_eos);
    auto encode = [&](const std::vector<std::string>& lines, const std::string& name) {
        TokenStream s;
        s.split = name;
        for (const auto& line : lines) ds.vocab.encode_line(line, s.ids);
        return s;
    };
    ds.train = encode(train_lines, "train");
    ds.valid = encode(valid_lines, "valid");
    ds.test = encode(test_lines, "test");
    return ds;
}

std::vector<Batch> batchify(const TokenStream& stream, i64 batch_size, i64 seq_len) {
    if (batch_size < 1 || seq_len < 1) throw ConfigError("batch_size and seq_len must be positive");
    const auto len = static_cast<i64>(stream.ids.size());
    const i64 per_batch = batch_size * seq_len;
    const i64 n_batches = len >= 1 ? (len - 1) / per_batch : 0;
    if (n_batches == 0) {
        throw InputError("token stream too short: " + std::to_string(len) + " tokens for batch " +
                         std::to_string(batch_size) + " x seq " + std::to_string(seq_len));
    }
    std::vector<Batch> batches;
    batches.reserve(static_cast<std::size_t>(n_batches));
    for (i64 i = 0; i < n_batches; ++i) {
        Batch b;
        b.batch_size = batch_size;
        b.seq_len = seq_len;
        b.inputs.resize(static_cast<std::size_t>(per_batch));
        b.targets.resize(static_cast<std::size_t>(per_batch));
        for (i64 r = 0; r < batch_size; ++r) {
            const i64 start = (i * batch_size + r) * seq_len;
            for (i64 t = 0; t < seq_len; ++t) {
                b.inputs[r * seq_len + t] = stream.ids[start + t];
                b.targets[r * seq_len + t] = stream.ids[start + t + 1];
            }
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace cupcur
