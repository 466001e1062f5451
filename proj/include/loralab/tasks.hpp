#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace loralab {

// ---- symbol vocabulary -----------------------------------------------------
// One shared vocabulary for all task families: digits, choice letters,
// booleans, operators, an answer separator and the pad/stop controls.

int symbol_vocab_size();
int token_pad();
int token_stop();
int token_ans();  // answer separator appended by render_prompt
int token_digit(int d);
int token_letter(int i);  // 0..3 -> A..D
int token_true_();
int token_false_();
int token_plus();
int token_mod();
int token_query();
int token_pipe();
int token_colon();

const std::string& token_symbol(int id);
int token_from_symbol(const std::string& s);  // errors on unknown symbol

std::string detokenize(std::span<const int> tokens);     // space joined symbols
std::vector<int> tokenize(const std::string& text);      // inverse

// digits of a non-negative number, most significant first ("0" for zero)
std::vector<int> number_tokens(long long value);

// ---- task families ----------------------------------------------------------

enum class TaskFamily { binary_parity, mod_arith, mcq4 };

const char* family_name(TaskFamily f);
TaskFamily family_from_name(const std::string& s);

struct TaskSpec {
    TaskFamily family = TaskFamily::binary_parity;
    int count = 1000;
    uint64_t seed = 1234;
    // binary_parity: bit strings of fixed length with a bounded number of ones
    int parity_bits = 16;
    int parity_max_ones = 6;
    // mod_arith: (a + b) mod modulus with operands below 10^operand_digits
    int operand_digits = 2;
    int modulus = 97;
    // mcq4: 4 candidate digit strings, exactly one contains the query digit
    int choices = 4;
    int candidate_len = 3;

    void validate() const;
    // number of distinct prompts the family can produce under this spec
    long long capacity() const;
};

struct Example {
    int64_t id = 0;
    TaskFamily family = TaskFamily::binary_parity;
    std::vector<int> prompt;  // question tokens, no separator
    std::vector<int> gold;    // answer tokens, no stop token
    std::map<std::string, long long> meta;
};

// Deterministic generation: distinct prompts, stratified gold balance
// (parity alternates true/false, mcq4 cycles the correct slot).
std::vector<Example> generate_examples(const TaskSpec& spec);

// prompt + answer separator; every model call uses the rendered form
std::vector<int> render_prompt(const Example& ex);

// recompute the answer from the prompt alone (closed form per family)
std::vector<int> closed_form_answer(TaskFamily family, std::span<const int> prompt);

// closed-form oracle over a generated dataset; errors on foreign ids
std::vector<int> oracle_answer(const std::vector<Example>& dataset, int64_t example_id);

// ---- JSONL persistence -------------------------------------------------------

void save_jsonl(const std::string& path, const std::vector<Example>& examples);
// errors mention the 1-based line number of the offending record
std::vector<Example> load_jsonl(const std::string& path);

}  // namespace loralab
