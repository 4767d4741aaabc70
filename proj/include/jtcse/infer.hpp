#pragma once

#include <string>
#include <vector>

#include "jtcse/cross.hpp"
#include "jtcse/data.hpp"

namespace jtcse {

// Inference contract: dropout off, cross branch off, output is the
// element-wise sum of the two towers' CLS poolings.
std::vector<std::vector<double>> infer_embed(const TwinModel& model,
                                             const Batch& batch);

std::vector<std::vector<double>> embed_sentences(
    const TwinModel& model, const Vocab& vocab,
    const std::vector<std::string>& sentences, int max_len,
    int batch_size = 32);

// Single-tower CLS pooling, used for the distilled student.
std::vector<std::vector<double>> embed_sentences_single(
    const EncoderWeights& enc, const Vocab& vocab,
    const std::vector<std::string>& sentences, int max_len,
    int batch_size = 32);

double cosine_value(const std::vector<double>& a, const std::vector<double>& b);

// Predicted cosine similarity per STS pair under the inference contract.
std::vector<double> predict_sts(const TwinModel& model, const Vocab& vocab,
                                const std::vector<STSExample>& sts, int max_len);

std::vector<double> predict_sts_single(const EncoderWeights& enc,
                                       const Vocab& vocab,
                                       const std::vector<STSExample>& sts,
                                       int max_len);

// Mean E_CLS over layers and examples of the given sentences (inference mode).
double mean_ecls(const TwinModel& model, const Vocab& vocab,
                 const std::vector<std::string>& sentences, int max_len,
                 int batch_size = 32);

}  // namespace jtcse
