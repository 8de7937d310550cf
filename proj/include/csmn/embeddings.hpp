#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "csmn/hashing.hpp"
#include "csmn/optim.hpp"
#include "csmn/rng.hpp"
#include "csmn/tensor.hpp"

namespace csmn {

enum class FieldGroup { item, behavior, profile, scenario, context };

inline const char* to_string(FieldGroup g) {
  switch (g) {
    case FieldGroup::item: return "item";
    case FieldGroup::behavior: return "behavior";
    case FieldGroup::profile: return "profile";
    case FieldGroup::scenario: return "scenario";
    case FieldGroup::context: return "context";
  }
  return "?";
}

struct FieldSpec {
  std::string name;
  FieldGroup group = FieldGroup::item;
  std::size_t vocab = 1;
  std::size_t dim = 16;
};

// One impression's raw feature ids, already bucketed into each field's
// vocabulary. Behavior fields hold one id per behavior (all the same length
// T); profile fields may be multi-valued and are mean-pooled per field.
struct GroupIds {
  std::vector<std::vector<std::size_t>> per_field;
};

class BoundEmbeddings;

// Bottom-shared embedding tables. There is exactly one table per field and
// behaviors reuse the item-group tables (a behavior is a past item), so a
// gradient step driven by a behavior occurrence moves target-item embeddings
// too.
class Embeddings {
 public:
  Embeddings(std::vector<FieldSpec> schema, Rng& rng) {
    for (auto& f : schema) {
      if (f.vocab < 1 || f.dim < 1)
        throw std::invalid_argument("Embeddings: vocab and dim must be >= 1 for " + f.name);
      if (f.group == FieldGroup::behavior)
        throw std::invalid_argument(
            "Embeddings: behaviors reuse item fields; declare the field as group=item");
      fields_[static_cast<int>(f.group)].push_back(f);
    }
    // behaviors alias the item fields
    fields_[static_cast<int>(FieldGroup::behavior)] = fields_[static_cast<int>(FieldGroup::item)];
    for (int g : {0, 2, 3, 4}) {  // item, profile, scenario, context own tables
      for (auto& f : fields_[g]) {
        Tensor t({f.vocab, f.dim});
        double bound = 1.0 / std::sqrt(static_cast<double>(f.dim));
        for (auto& v : t.data) v = rng.uniform(-bound, bound);
        tables_.push_back(std::move(t));
        table_index_[f.name] = tables_.size() - 1;
      }
    }
  }

  void register_params(ParamStore& store) {
    for (int g : {0, 2, 3, 4})
      for (auto& f : fields_[g]) store.add("emb." + f.name, tables_[table_index_.at(f.name)]);
  }

  const std::vector<FieldSpec>& fields(FieldGroup g) const {
    return fields_[static_cast<int>(g)];
  }

  std::size_t group_dim(FieldGroup g) const {
    std::size_t d = 0;
    for (const auto& f : fields(g)) d += f.dim;
    return d;
  }

  Tensor& table(const std::string& field_name) {
    auto it = table_index_.find(field_name);
    if (it == table_index_.end())
      throw std::invalid_argument("Embeddings: unknown field " + field_name);
    return tables_[it->second];
  }

  // Lookup view for one graph; caches the per-table leaf so a whole batch
  // shares a single tape node per table.
  BoundEmbeddings bind(Graph& g);

 private:
  friend class BoundEmbeddings;
  std::vector<FieldSpec> fields_[5];
  std::vector<Tensor> tables_;
  std::map<std::string, std::size_t> table_index_;
};

class BoundEmbeddings {
 public:
  BoundEmbeddings(Embeddings& emb, Graph& g) : emb_(emb), g_(g) {}

  // Per-field gather + last-axis concat.
  //   behavior group -> [T x d_b], one row per behavior (T may be 0)
  //   other groups   -> [sum of field dims], multi-valued fields mean-pooled
  Var embed_group(const GroupIds& ids, FieldGroup group) {
    const auto& fs = emb_.fields(group);
    if (ids.per_field.size() != fs.size())
      throw std::invalid_argument(std::string("embed_group: expected ") +
                                  std::to_string(fs.size()) + " fields for group " +
                                  to_string(group));
    if (group == FieldGroup::behavior) {
      std::size_t t_len = ids.per_field.empty() ? 0 : ids.per_field[0].size();
      std::vector<Var> parts;
      for (std::size_t i = 0; i < fs.size(); ++i) {
        if (ids.per_field[i].size() != t_len)
          throw std::invalid_argument("embed_group: behavior fields must share length");
        parts.push_back(g_.gather_rows(leaf(fs[i].name), ids.per_field[i]));
      }
      return g_.concat(parts);
    }
    std::vector<Var> parts;
    for (std::size_t i = 0; i < fs.size(); ++i)
      parts.push_back(embed_field(fs[i], ids.per_field[i]));
    return g_.concat(parts);
  }

  // Profile fields as rows of a [P x d] matrix (used by the memory key
  // attention); requires every profile field to share one dimension.
  Var embed_profile_rows(const GroupIds& ids) {
    const auto& fs = emb_.fields(FieldGroup::profile);
    if (fs.empty()) throw std::invalid_argument("embed_profile_rows: no profile fields");
    if (ids.per_field.size() != fs.size())
      throw std::invalid_argument("embed_profile_rows: field count mismatch");
    std::size_t d = fs[0].dim;
    for (const auto& f : fs)
      if (f.dim != d)
        throw std::invalid_argument("embed_profile_rows: profile fields must share dim");
    std::vector<Var> flat;
    flat.reserve(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i)
      flat.push_back(embed_field(fs[i], ids.per_field[i]));
    if (flat.size() == 1) return g_.reshape(flat[0], {1, d});
    return g_.reshape(g_.concat(flat), {fs.size(), d});
  }

  Graph& graph() { return g_; }

 private:
  Var leaf(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    Var v = g_.param(emb_.table(name));
    leaves_.emplace(name, v);
    return v;
  }

  Var embed_field(const FieldSpec& f, const std::vector<std::size_t>& ids) {
    if (ids.empty())
      throw std::invalid_argument("embed_field: field " + f.name + " has no ids");
    Var rows = g_.gather_rows(leaf(f.name), ids);
    if (ids.size() == 1) return g_.reshape(rows, {f.dim});
    return g_.mean_rows(rows);
  }

  Embeddings& emb_;
  Graph& g_;
  std::map<std::string, Var> leaves_;
};

inline BoundEmbeddings Embeddings::bind(Graph& g) { return BoundEmbeddings(*this, g); }

}  // namespace csmn
