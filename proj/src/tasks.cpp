#include "loralab/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "loralab/rng.hpp"

namespace loralab {

namespace {

// id layout: 0 pad, 1 stop, 2 ANS, 3..12 digits, 13..16 A..D, 17 true,
// 18 false, 19 +, 20 mod, 21 ?, 22 |, 23 :
const std::vector<std::string>& symbol_table() {
    static const std::vector<std::string> table = {
        "<pad>", "<stop>", "ANS", "0", "1", "2",  "3", "4", "5",    "6",     "7", "8",
        "9",     "A",      "B",   "C", "D", "true", "false", "+", "mod", "?", "|", ":"};
    return table;
}

const std::unordered_map<std::string, int>& symbol_index() {
    static const std::unordered_map<std::string, int> index = [] {
        std::unordered_map<std::string, int> m;
        const auto& t = symbol_table();
        for (size_t i = 0; i < t.size(); ++i) m[t[i]] = static_cast<int>(i);
        return m;
    }();
    return index;
}

long long binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    long long r = 1;
    for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
}

std::string prompt_key(const std::vector<int>& prompt) {
    std::string key;
    key.reserve(prompt.size() * 3);
    for (int t : prompt) {
        key += std::to_string(t);
        key += ',';
    }
    return key;
}

}  // namespace

// ---- vocabulary -------------------------------------------------------------

int symbol_vocab_size() { return static_cast<int>(symbol_table().size()); }
int token_pad() { return 0; }
int token_stop() { return 1; }
int token_ans() { return 2; }
int token_digit(int d) {
    if (d < 0 || d > 9) throw std::invalid_argument("token_digit: digit out of range");
    return 3 + d;
}
int token_letter(int i) {
    if (i < 0 || i > 3) throw std::invalid_argument("token_letter: index out of range");
    return 13 + i;
}
int token_true_() { return 17; }
int token_false_() { return 18; }
int token_plus() { return 19; }
int token_mod() { return 20; }
int token_query() { return 21; }
int token_pipe() { return 22; }
int token_colon() { return 23; }

const std::string& token_symbol(int id) {
    const auto& t = symbol_table();
    if (id < 0 || id >= static_cast<int>(t.size()))
        throw std::invalid_argument("token_symbol: id out of range");
    return t[static_cast<size_t>(id)];
}

int token_from_symbol(const std::string& s) {
    const auto& idx = symbol_index();
    auto it = idx.find(s);
    if (it == idx.end()) throw std::invalid_argument("unknown symbol: '" + s + "'");
    return it->second;
}

std::string detokenize(std::span<const int> tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += token_symbol(tokens[i]);
    }
    return out;
}

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> out;
    std::istringstream in(text);
    std::string sym;
    while (in >> sym) out.push_back(token_from_symbol(sym));
    return out;
}

std::vector<int> number_tokens(long long value) {
    if (value < 0) throw std::invalid_argument("number_tokens: negative value");
    std::string digits = std::to_string(value);
    std::vector<int> out;
    for (char c : digits) out.push_back(token_digit(c - '0'));
    return out;
}

// ---- task spec ----------------------------------------------------------------

const char* family_name(TaskFamily f) {
    switch (f) {
        case TaskFamily::binary_parity: return "binary_parity";
        case TaskFamily::mod_arith: return "mod_arith";
        case TaskFamily::mcq4: return "mcq4";
    }
    throw std::logic_error("family_name: bad enum");
}

TaskFamily family_from_name(const std::string& s) {
    if (s == "binary_parity") return TaskFamily::binary_parity;
    if (s == "mod_arith") return TaskFamily::mod_arith;
    if (s == "mcq4") return TaskFamily::mcq4;
    throw std::invalid_argument("unknown task family: '" + s + "'");
}

void TaskSpec::validate() const {
    if (count <= 0) throw std::invalid_argument("task count must be positive");
    switch (family) {
        case TaskFamily::binary_parity:
            if (parity_bits < 2 || parity_bits > 48)
                throw std::invalid_argument("parity_bits must be in [2, 48]");
            if (parity_max_ones < 1 || parity_max_ones > parity_bits)
                throw std::invalid_argument("parity_max_ones must be in [1, parity_bits]");
            break;
        case TaskFamily::mod_arith:
            if (operand_digits < 1 || operand_digits > 4)
                throw std::invalid_argument("operand_digits must be in [1, 4]");
            if (modulus < 2 || modulus > 9999)
                throw std::invalid_argument("modulus must be in [2, 9999]");
            break;
        case TaskFamily::mcq4:
            if (choices != 4) throw std::invalid_argument("mcq4 requires choices == 4");
            if (candidate_len < 1 || candidate_len > 8)
                throw std::invalid_argument("candidate_len must be in [1, 8]");
            break;
    }
    if (count > capacity())
        throw std::invalid_argument("task count exceeds the family's distinct-prompt capacity");
}

long long TaskSpec::capacity() const {
    switch (family) {
        case TaskFamily::binary_parity: {
            // generation alternates gold classes, so the binding bound is
            // twice the smaller parity class
            long long even = 0, odd = 0;
            for (int k = 0; k <= parity_max_ones; ++k)
                (k % 2 == 0 ? even : odd) += binomial(parity_bits, k);
            return 2 * std::min(even, odd);
        }
        case TaskFamily::mod_arith: {
            long long range = 1;
            for (int i = 0; i < operand_digits; ++i) range *= 10;
            return range * range;
        }
        case TaskFamily::mcq4: {
            // loose lower bound; the real space is much larger
            long long per = 1;
            for (int i = 0; i < candidate_len; ++i) per *= 9;
            return 10 * 4 * per;
        }
    }
    throw std::logic_error("capacity: bad enum");
}

// ---- generation -----------------------------------------------------------------

namespace {

Example make_parity(const TaskSpec& spec, Rng& rng, int64_t id, int want_odd) {
    // counts of ones with the requested parity, drawn uniformly
    std::vector<int> counts;
    for (int c = 0; c <= spec.parity_max_ones; ++c)
        if (c % 2 == want_odd) counts.push_back(c);
    int ones = counts[static_cast<size_t>(rng.uniform_int(static_cast<int>(counts.size())))];
    std::vector<int> pos(spec.parity_bits);
    for (int i = 0; i < spec.parity_bits; ++i) pos[i] = i;
    rng.shuffle(pos);
    std::vector<bool> bit(spec.parity_bits, false);
    for (int i = 0; i < ones; ++i) bit[static_cast<size_t>(pos[i])] = true;

    Example ex;
    ex.id = id;
    ex.family = TaskFamily::binary_parity;
    for (int i = 0; i < spec.parity_bits; ++i) ex.prompt.push_back(token_digit(bit[i] ? 1 : 0));
    ex.gold.push_back(ones % 2 == 0 ? token_true_() : token_false_());
    ex.meta["ones"] = ones;
    return ex;
}

Example make_mod(const TaskSpec& spec, Rng& rng, int64_t id) {
    long long range = 1;
    for (int i = 0; i < spec.operand_digits; ++i) range *= 10;
    long long a = rng.uniform_int(static_cast<int>(range));
    long long b = rng.uniform_int(static_cast<int>(range));
    Example ex;
    ex.id = id;
    ex.family = TaskFamily::mod_arith;
    auto at = number_tokens(a), bt = number_tokens(b), pt = number_tokens(spec.modulus);
    ex.prompt.insert(ex.prompt.end(), at.begin(), at.end());
    ex.prompt.push_back(token_plus());
    ex.prompt.insert(ex.prompt.end(), bt.begin(), bt.end());
    ex.prompt.push_back(token_mod());
    ex.prompt.insert(ex.prompt.end(), pt.begin(), pt.end());
    ex.gold = number_tokens((a + b) % spec.modulus);
    ex.meta["a"] = a;
    ex.meta["b"] = b;
    ex.meta["p"] = spec.modulus;
    return ex;
}

Example make_mcq(const TaskSpec& spec, Rng& rng, int64_t id, int correct_slot) {
    int q = rng.uniform_int(10);
    Example ex;
    ex.id = id;
    ex.family = TaskFamily::mcq4;
    ex.prompt.push_back(token_query());
    ex.prompt.push_back(token_digit(q));
    for (int s = 0; s < 4; ++s) {
        ex.prompt.push_back(token_pipe());
        ex.prompt.push_back(token_letter(s));
        ex.prompt.push_back(token_colon());
        if (s == correct_slot) {
            // random string with q forced into one position
            int hit = rng.uniform_int(spec.candidate_len);
            for (int i = 0; i < spec.candidate_len; ++i)
                ex.prompt.push_back(i == hit ? token_digit(q) : token_digit(rng.uniform_int(10)));
        } else {
            // digits drawn from the 9 values != q
            for (int i = 0; i < spec.candidate_len; ++i) {
                int d = rng.uniform_int(9);
                if (d >= q) ++d;
                ex.prompt.push_back(token_digit(d));
            }
        }
    }
    ex.gold.push_back(token_letter(correct_slot));
    ex.meta["q"] = q;
    ex.meta["slot"] = correct_slot;
    return ex;
}

}  // namespace

std::vector<Example> generate_examples(const TaskSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0xDA7A));
    std::vector<Example> out;
    out.reserve(static_cast<size_t>(spec.count));
    std::unordered_set<std::string> seen;
    const int max_retries = 200000;
    for (int64_t i = 0; i < spec.count; ++i) {
        Example ex;
        int tries = 0;
        while (true) {
            switch (spec.family) {
                case TaskFamily::binary_parity:
                    ex = make_parity(spec, rng, i, static_cast<int>(i % 2));
                    break;
                case TaskFamily::mod_arith:
                    ex = make_mod(spec, rng, i);
                    break;
                case TaskFamily::mcq4:
                    ex = make_mcq(spec, rng, i, static_cast<int>(i % 4));
                    break;
            }
            if (seen.insert(prompt_key(ex.prompt)).second) break;
            if (++tries > max_retries)
                throw std::runtime_error("generate_examples: could not find a fresh prompt");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<int> render_prompt(const Example& ex) {
    std::vector<int> out = ex.prompt;
    out.push_back(token_ans());
    return out;
}

// ---- closed-form oracle ---------------------------------------------------------

namespace {

bool is_digit_token(int t) { return t >= token_digit(0) && t <= token_digit(9); }
int digit_of(int t) { return t - token_digit(0); }

long long parse_number(std::span<const int> tokens, size_t& i) {
    if (i >= tokens.size() || !is_digit_token(tokens[i]))
        throw std::invalid_argument("oracle: expected a digit");
    long long v = 0;
    while (i < tokens.size() && is_digit_token(tokens[i])) {
        v = v * 10 + digit_of(tokens[i]);
        ++i;
    }
    return v;
}

}  // namespace

std::vector<int> closed_form_answer(TaskFamily family, std::span<const int> prompt) {
    switch (family) {
        case TaskFamily::binary_parity: {
            int ones = 0;
            for (int t : prompt) {
                if (t == token_digit(1))
                    ++ones;
                else if (t != token_digit(0))
                    throw std::invalid_argument("oracle: parity prompt must be 0/1 bits");
            }
            return {ones % 2 == 0 ? token_true_() : token_false_()};
        }
        case TaskFamily::mod_arith: {
            size_t i = 0;
            long long a = parse_number(prompt, i);
            if (i >= prompt.size() || prompt[i] != token_plus())
                throw std::invalid_argument("oracle: expected '+'");
            ++i;
            long long b = parse_number(prompt, i);
            if (i >= prompt.size() || prompt[i] != token_mod())
                throw std::invalid_argument("oracle: expected 'mod'");
            ++i;
            long long p = parse_number(prompt, i);
            if (i != prompt.size()) throw std::invalid_argument("oracle: trailing tokens");
            if (p < 2) throw std::invalid_argument("oracle: modulus must be >= 2");
            return number_tokens((a + b) % p);
        }
        case TaskFamily::mcq4: {
            if (prompt.size() < 2 || prompt[0] != token_query() || !is_digit_token(prompt[1]))
                throw std::invalid_argument("oracle: malformed mcq prompt");
            int q = prompt[1];
            int found = -1;
            size_t i = 2;
            for (int s = 0; s < 4; ++s) {
                if (i >= prompt.size() || prompt[i] != token_pipe())
                    throw std::invalid_argument("oracle: expected '|'");
                ++i;
                if (i >= prompt.size() || prompt[i] != token_letter(s))
                    throw std::invalid_argument("oracle: expected choice letter");
                ++i;
                if (i >= prompt.size() || prompt[i] != token_colon())
                    throw std::invalid_argument("oracle: expected ':'");
                ++i;
                bool contains = false;
                while (i < prompt.size() && is_digit_token(prompt[i])) {
                    if (prompt[i] == q) contains = true;
                    ++i;
                }
                if (contains) {
                    if (found >= 0)
                        throw std::invalid_argument("oracle: more than one candidate matches");
                    found = s;
                }
            }
            if (found < 0) throw std::invalid_argument("oracle: no candidate matches");
            return {token_letter(found)};
        }
    }
    throw std::logic_error("closed_form_answer: bad enum");
}

std::vector<int> oracle_answer(const std::vector<Example>& dataset, int64_t example_id) {
    for (const auto& ex : dataset) {
        if (ex.id == example_id) return closed_form_answer(ex.family, ex.prompt);
    }
    throw std::invalid_argument("oracle_answer: unknown example id " + std::to_string(example_id));
}

// ---- JSONL ------------------------------------------------------------------------

void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& ex : examples) {
        nlohmann::ordered_json j;
        j["id"] = ex.id;
        j["task"] = family_name(ex.family);
        j["prompt"] = detokenize(ex.prompt);
        j["answer"] = detokenize(ex.gold);
        nlohmann::ordered_json meta = nlohmann::ordered_json::object();
        for (const auto& [k, v] : ex.meta) meta[k] = v;
        j["meta"] = meta;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed while writing: " + path);
}

std::vector<Example> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::vector<Example> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            Example ex;
            ex.id = j.at("id").get<int64_t>();
            ex.family = family_from_name(j.at("task").get<std::string>());
            ex.prompt = tokenize(j.at("prompt").get<std::string>());
            ex.gold = tokenize(j.at("answer").get<std::string>());
            if (ex.gold.empty()) throw std::invalid_argument("empty answer");
            if (j.contains("meta"))
                for (const auto& [k, v] : j.at("meta").items())
                    ex.meta[k] = v.get<long long>();
            out.push_back(std::move(ex));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": bad record on line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    }
    return out;
}

}  // namespace loralab
