#ifndef MAGNN_H
#define MAGNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MagnnStatus {
  MAGNN_STATUS_OK = 0,
  MAGNN_STATUS_NULL_POINTER = 1,
  MAGNN_STATUS_INVALID_ARGUMENT = 2,
  MAGNN_STATUS_NOT_FOUND = 3,
  MAGNN_STATUS_IO = 4,
  MAGNN_STATUS_FORMAT = 5,
  MAGNN_STATUS_INCOMPATIBLE = 6,
  MAGNN_STATUS_CONFIG = 7,
  MAGNN_STATUS_RUNTIME = 8,
  MAGNN_STATUS_PANIC = 9,
} MagnnStatus;

// Which held-out split to evaluate or recommend for.
typedef enum MagnnSplit {
  // Input is the training prefix.
  MAGNN_SPLIT_VAL = 0,
  // Input is training plus validation.
  MAGNN_SPLIT_TEST = 1,
} MagnnSplit;

// Opaque prepared dataset.
typedef struct MagnnDataset MagnnDataset;

// Opaque trained model bound to the dataset it was loaded against.
typedef struct MagnnModel MagnnModel;

typedef struct MagnnMetrics {
  double recall;
  double ndcg;
  size_t evaluated_users;
  size_t skipped_users;
} MagnnMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *magnn_last_error(void);

// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum MagnnStatus magnn_dataset_open(const char *path, struct MagnnDataset **out);

// # Safety
// `data` must come from [`magnn_dataset_open`] (or be null) and is invalid afterwards.
void magnn_dataset_free(struct MagnnDataset *data);

// # Safety
// `data` must be a live dataset handle or null.
size_t magnn_dataset_num_users(const struct MagnnDataset *data);

// # Safety
// `data` must be a live dataset handle or null.
size_t magnn_dataset_num_items(const struct MagnnDataset *data);

// Loads a checkpoint and builds its item graph from the dataset's training
// sequences. The dataset handle is not retained.
//
// # Safety
// `path` must be a nul-terminated string, `data` a live dataset handle and
// `out` a valid pointer.
enum MagnnStatus magnn_model_load(const char *path,
                                  const struct MagnnDataset *data,
                                  struct MagnnModel **out);

// # Safety
// `model` must come from [`magnn_model_load`] (or be null) and is invalid afterwards.
void magnn_model_free(struct MagnnModel *model);

// Recall@k and NDCG@k averaged over users with held-out items.
//
// # Safety
// `model` and `data` must be live handles and `out` a valid pointer.
enum MagnnStatus magnn_evaluate(const struct MagnnModel *model,
                                const struct MagnnDataset *data,
                                enum MagnnSplit split,
                                size_t k,
                                struct MagnnMetrics *out);

// Writes up to `k` item indices for `user`, best first, into `items` and
// the count into `written`. Items already in the split's input are skipped.
//
// # Safety
// `items` must point to at least `k` writable `uint32_t`; `written` must be valid.
enum MagnnStatus magnn_recommend(const struct MagnnModel *model,
                                 const struct MagnnDataset *data,
                                 enum MagnnSplit split,
                                 size_t user,
                                 size_t k,
                                 uint32_t *items,
                                 size_t *written);

// Original identifier of item `index` as a nul-terminated string. The caller
// releases it with [`magnn_string_free`]. Returns null when out of range.
//
// # Safety
// `data` must be a live dataset handle or null.
char *magnn_dataset_item_id(const struct MagnnDataset *data, size_t index);

// # Safety
// `s` must come from this library (or be null) and is invalid afterwards.
void magnn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGNN_H */
