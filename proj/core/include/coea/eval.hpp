#pragma once

#include <map>
#include <set>

#include "coea/grouping.hpp"
#include "coea/matrix.hpp"
#include "coea/rng.hpp"
#include "coea/types.hpp"

namespace coea {

// Category-level metric suite. All four metrics are means over evaluated
// users and live in [0,1].

struct RecommendationList {
    UserId user_id;
    std::vector<std::string> ranked;  // no duplicates within the evaluated top-K
};

struct UserGroundTruth {
    std::set<std::string> preferred;     // C_u^pref
    std::set<std::string> historical;    // C_u^hist (exposure history)
    std::set<std::string> test_clicked;  // categories clicked in the test window
};

using TruthMap = std::map<UserId, UserGroundTruth>;

// hit_u / K: preferred categories inside the top-K.
double category_hit_rate(const std::vector<RecommendationList>& lists, const TruthMap& truths,
                         size_t k_eval, std::map<UserId, double>* per_user = nullptr);

// DCG/IDCG with discount log2(i+1), 1-indexed; rel(c)=1 iff c was clicked in
// the test window. Users whose top-K has no relevant category are excluded
// from the mean and counted in *excluded.
double category_ndcg(const std::vector<RecommendationList>& lists, const TruthMap& truths,
                     size_t k_eval, size_t* excluded = nullptr,
                     std::map<UserId, double>* per_user = nullptr);

// new_u / |C|: top-K categories outside the user's historical set.
double novel_category_proportion(const std::vector<RecommendationList>& lists,
                                 const TruthMap& truths, size_t k_eval, size_t n_categories,
                                 std::map<UserId, double>* per_user = nullptr);

// tail_u / |C|: top-K categories inside the long-tail set.
double category_long_tail_proportion(const std::vector<RecommendationList>& lists,
                                     const std::set<std::string>& tail, size_t k_eval,
                                     size_t n_categories,
                                     std::map<UserId, double>* per_user = nullptr);

// ceil(0.2 |C|) lowest-click-volume categories; categories absent from the
// volume map count zero clicks; volume ties break by name.
std::set<std::string> long_tail_set(const std::map<std::string, size_t>& click_volume,
                                    const std::vector<std::string>& all_categories);

struct MetricReport {
    size_t k_eval = 0;
    size_t n_users = 0;       // users evaluated
    size_t n_ndcg_users = 0;  // users with nonzero IDCG
    double c_h = 0.0;
    double c_n = 0.0;
    double ncp = 0.0;
    double cltp = 0.0;
    std::map<UserId, double> per_user_hit, per_user_ndcg, per_user_ncp, per_user_cltp;
};

MetricReport evaluate_lists(const std::vector<RecommendationList>& lists, const TruthMap& truths,
                            const std::set<std::string>& tail, size_t k_eval,
                            size_t n_categories);

// `metric,K,mean,n_users` rows in a fixed order (C-H, C-N, NCP, CLTP).
std::string metric_csv(const MetricReport& report);
std::string per_user_tsv(const MetricReport& report);

// Figure-3 style analysis. Diagonal entries compare two disjoint same-group
// subsets (intra), off-diagonal entries compare first subsets across groups.
// Groups with fewer than 2*subset_size members are skipped and counted.
Matrix group_similarity_analysis(const std::vector<SemanticGroup>& groups,
                                 const std::map<UserId, Vec>& reps, size_t n_groups_sampled,
                                 size_t subset_size, Rng& rng,
                                 std::vector<GroupCSID>* sampled = nullptr,
                                 size_t* skipped = nullptr);

double mean_intra_similarity(const Matrix& m);   // diagonal mean
double mean_inter_similarity(const Matrix& m);   // off-diagonal mean

// Cosine of one category representation against each user representation;
// zero vectors score 0.
Vec category_user_similarity(const Vec& category_rep, const std::vector<Vec>& user_reps);

std::string similarity_csv(const Matrix& m, const std::vector<GroupCSID>& labels);

}  // namespace coea
