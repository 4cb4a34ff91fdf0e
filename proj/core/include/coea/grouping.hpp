#pragma once

#include <map>

#include "coea/matrix.hpp"
#include "coea/quantizer.hpp"
#include "coea/types.hpp"

namespace coea {

struct SemanticGroup {
    GroupCSID csid;
    std::vector<UserId> members;  // user-id order
    Vec centroid;                 // mean of member u_long vectors
};

struct GroupProfile {
    GroupCSID csid;
    std::vector<UserId> representative_users;
    std::string profile_text;
};

// Partition users by CSID; groups come back sorted by CSID lexicographically.
// A user without a representation raises DataError.
std::vector<SemanticGroup> build_groups(const std::map<UserId, GroupCSID>& assignments,
                                        const std::map<UserId, Vec>& reps);

// The k members closest to the centroid in L2, ties by user id; all members
// when the group is smaller than k.
std::vector<UserId> select_representatives(const SemanticGroup& group,
                                           const std::map<UserId, Vec>& reps, size_t k);

// Cold-start target: the largest group, ties by CSID order.
GroupCSID default_group(const std::vector<SemanticGroup>& groups);

// `csid<TAB>size<TAB>rep_user_ids(comma)<TAB>profile_text` lines; tabs and
// newlines in profile text are flattened to spaces.
std::string format_group_table(const std::vector<SemanticGroup>& groups,
                               const std::vector<GroupProfile>& profiles);

}  // namespace coea
