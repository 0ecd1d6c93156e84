#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cdrec {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

// Ordering used for every id list: purely numeric ids compare by value and
// sort before anything else; other ids compare lexicographically.
bool natural_less(std::string_view a, std::string_view b);

// Binary implicit-feedback interactions of one domain. String ids are mapped to
// dense indices in the order given at construction; adjacency lists are sorted
// by index in both directions. Immutable once built.
class InteractionSet {
 public:
  InteractionSet() = default;

  // Ids must be unique; pairs refer to positions in the id lists. Duplicate
  // pairs are collapsed. Users or items without interactions are allowed.
  InteractionSet(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                 std::span<const std::pair<UserIndex, ItemIndex>> pairs);

  // Builds id lists in natural order from the pairs plus any extra ids.
  static InteractionSet from_pairs(std::span<const std::pair<std::string, std::string>> pairs,
                                   std::span<const std::string> extra_users = {},
                                   std::span<const std::string> extra_items = {});

  std::size_t num_users() const noexcept { return user_ids_.size(); }
  std::size_t num_items() const noexcept { return item_ids_.size(); }
  std::size_t num_interactions() const noexcept { return num_pairs_; }
  bool empty() const noexcept { return num_pairs_ == 0; }

  const std::string& user_id(UserIndex u) const { return user_ids_.at(u); }
  const std::string& item_id(ItemIndex i) const { return item_ids_.at(i); }
  const std::vector<std::string>& user_ids() const noexcept { return user_ids_; }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }

  std::optional<UserIndex> find_user(std::string_view id) const;
  std::optional<ItemIndex> find_item(std::string_view id) const;

  std::span<const ItemIndex> items_of(UserIndex u) const { return user_items_.at(u); }
  std::span<const UserIndex> users_of(ItemIndex i) const { return item_users_.at(i); }
  bool contains(UserIndex u, ItemIndex i) const;

  // All pairs, ordered by user then item.
  std::vector<std::pair<UserIndex, ItemIndex>> pairs() const;

  // One "user<TAB>item" line per pair, in pairs() order.
  void write_tsv(std::ostream& out) const;

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, UserIndex> user_lookup_;
  std::unordered_map<std::string, ItemIndex> item_lookup_;
  std::vector<std::vector<ItemIndex>> user_items_;
  std::vector<std::vector<UserIndex>> item_users_;
  std::size_t num_pairs_ = 0;
};

// Reads "user<TAB>item[<TAB>ignored...]" lines; '#' lines and blank lines are
// skipped. Throws MalformedLine or EmptyDataset.
InteractionSet parse_interactions(std::istream& in);
InteractionSet load_interactions(const std::filesystem::path& path);

// Raw pair reader shared with the scenario loader.
std::vector<std::pair<std::string, std::string>> read_pairs(std::istream& in);

}  // namespace cdrec
