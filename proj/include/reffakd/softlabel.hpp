#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reffakd/dataset.hpp"
#include "reffakd/model.hpp"

namespace reffakd {

/// Bottleneck vectors grouped by class, stored contiguously class-major:
/// data[(i*n + k)*d + t] is component t of sample k of class i.
struct EmbeddingSet {
  int c = 0;
  int n = 0;
  int d = 0;
  std::vector<double> data;

  const double* vec(int cls, int sample) const {
    return data.data() + (static_cast<size_t>(cls) * n + sample) * d;
  }
};

/// Checks counts and that no vector has zero norm.
void validate_embedding_set(const EmbeddingSet& emb);

/// Draws n_per_class images per class (seeded, without replacement), runs
/// the encoder only (through the "bottleneck" tap, eval mode, no gradients),
/// and flattens each activation to a d-vector.
EmbeddingSet extract_embeddings(Model& cae, const Dataset& ds, int n_per_class, uint64_t seed);

/// dot(u,v) / (|u| |v|). Throws on zero-norm input.
double cosine(const std::vector<double>& u, const std::vector<double>& v);

/// c x c class-similarity matrix. `values` holds the boosted matrix: the
/// pre-boost part is symmetric (shared accumulation), and gamma has been
/// added to each diagonal cell after averaging.
struct SimilarityMatrix {
  int c = 0;
  double gamma = 0.0;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<size_t>(i) * c + j]; }
};

/// Off-diagonal cell (i,j): mean cosine over all n*n ordered cross pairs.
/// Diagonal cell: mean over the n*(n-1) ordered distinct same-class pairs,
/// plus gamma. Requires n >= 2 so the diagonal mean is defined.
SimilarityMatrix build_similarity_matrix(const EmbeddingSet& emb, double gamma);

/// Smallest gamma in {0, step, 2*step, ...} making every row's boosted
/// diagonal strictly greater than the rest of its row. `pre_boost` is the
/// un-boosted c x c matrix.
double find_min_gamma(const std::vector<double>& pre_boost, int c, double grid_step = 0.0005);
double find_min_gamma(const EmbeddingSet& emb, double grid_step = 0.0005);

struct SoftLabelProvenance {
  std::string dataset_id;
  std::string checkpoint_id;
  int n = 0;
  double gamma = 0.0;
  uint64_t seed = 0;
};

/// Row-stochastic c x c table: row i is the soft target distribution for
/// class i (strictly positive, sums to 1, argmax on the diagonal).
struct SoftLabelTable {
  int c = 0;
  std::vector<double> rows;
  SoftLabelProvenance provenance;

  const double* row(int i) const { return rows.data() + static_cast<size_t>(i) * c; }
  double at(int i, int j) const { return rows[static_cast<size_t>(i) * c + j]; }
};

void validate_soft_label_table(const SoftLabelTable& table);

/// Temperature-1 softmax of every row. Throws if any row's argmax is not its
/// diagonal (including ties): such a table would mislabel a class.
SoftLabelTable to_soft_labels(const SimilarityMatrix& sim, SoftLabelProvenance provenance);

/// Text format: line 1 `c=<int> gamma=<float> n=<int> seed=<int>`, then c
/// lines of c space-separated floats at 17 significant digits. Values
/// round-trip bit-exactly.
void save_soft_label_table(const SoftLabelTable& table, const std::string& path);
SoftLabelTable load_soft_label_table(const std::string& path);

}  // namespace reffakd
