#ifndef ATTRINV_H
#define ATTRINV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every call.
 */
typedef enum AttrinvStatus {
  ATTRINV_STATUS_OK = 0,
  ATTRINV_STATUS_NULL_POINTER = 1,
  ATTRINV_STATUS_INVALID_ARGUMENT = 2,
  ATTRINV_STATUS_IO = 3,
  ATTRINV_STATUS_PARSE = 4,
  ATTRINV_STATUS_SHAPE = 5,
  ATTRINV_STATUS_DOMAIN = 6,
  ATTRINV_STATUS_NUMERIC = 7,
  ATTRINV_STATUS_CHECKPOINT = 8,
  ATTRINV_STATUS_IMAGE = 9,
  ATTRINV_STATUS_INTERNAL = 10,
  ATTRINV_STATUS_PANIC = 11,
} AttrinvStatus;

/*
 Parsed attribute list.
 */
typedef struct AttrinvAttributeTable AttrinvAttributeTable;

/*
 Trained generator loaded from a checkpoint.
 */
typedef struct AttrinvGenerator AttrinvGenerator;

/*
 Summary statistics of the per-image DFN ratios.
 */
typedef struct AttrinvDfnSummary {
  double mean;
  double q25;
  double q50;
  double q75;
  double iqr;
} AttrinvDfnSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failed call on this thread, or NULL if the
 last call succeeded. Valid until the next call on the same thread.
 */
const char *attrinv_last_error_message(void);

/*
 Loads the generator stored in a training checkpoint.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AttrinvStatus attrinv_generator_load(const char *path, struct AttrinvGenerator **out);

/*
 Side length of the square images the generator produces; 0 for NULL.

 # Safety
 `generator` must be NULL or a live handle.
 */
uintptr_t attrinv_generator_resolution(const struct AttrinvGenerator *generator);

/*
 Translates one interleaved RGB8 image of any size. The input is center
 cropped and resampled to the generator resolution `r`; `out_inverted`
 receives `G(x)` as `r * r * 3` RGB8 bytes. When `out_cycle` is not NULL
 it receives `G(G(x))` in the same layout. `out_len` is the capacity of
 each output buffer.

 # Safety
 `pixels` must hold `height * width * 3` bytes; output buffers must hold
 `out_len` bytes.
 */
enum AttrinvStatus attrinv_generator_invert(const struct AttrinvGenerator *generator,
                                            const uint8_t *pixels,
                                            uintptr_t height,
                                            uintptr_t width,
                                            uint8_t *out_inverted,
                                            uint8_t *out_cycle,
                                            uintptr_t out_len);

/*
 Releases a generator handle. NULL is ignored.

 # Safety
 `generator` must be NULL or a handle not yet freed.
 */
void attrinv_generator_free(struct AttrinvGenerator *generator);

/*
 Parses an attribute list in the CelebA text layout.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AttrinvStatus attrinv_attribute_table_load(const char *path,
                                                struct AttrinvAttributeTable **out);

/*
 Number of image rows; 0 for NULL.

 # Safety
 `table` must be NULL or a live handle.
 */
uintptr_t attrinv_attribute_table_rows(const struct AttrinvAttributeTable *table);

/*
 Number of attribute columns; 0 for NULL.

 # Safety
 `table` must be NULL or a live handle.
 */
uintptr_t attrinv_attribute_table_columns(const struct AttrinvAttributeTable *table);

/*
 Writes the 0/1 label of `row` for attribute `column` into `out`.

 # Safety
 `table` must be a live handle and `out` a valid pointer.
 */
enum AttrinvStatus attrinv_attribute_table_label(const struct AttrinvAttributeTable *table,
                                                 uintptr_t row,
                                                 uintptr_t column,
                                                 uint8_t *out);

/*
 Releases a table handle. NULL is ignored.

 # Safety
 `table` must be NULL or a handle not yet freed.
 */
void attrinv_attribute_table_free(struct AttrinvAttributeTable *table);

/*
 DFN statistics for `n` paired embeddings of width `dim`, both given
 row-major.

 # Safety
 `real` and `generated` must each hold `n * dim` values; `out` must be valid.
 */
enum AttrinvStatus attrinv_dfn(const double *real,
                               const double *generated,
                               uintptr_t n,
                               uintptr_t dim,
                               struct AttrinvDfnSummary *out);

/*
 Fréchet distance between Gaussian fits of two row-major feature sets of
 width `dim`, with `epsilon` added to both covariance diagonals.

 # Safety
 `real` must hold `n_real * dim` values, `generated` `n_generated * dim`;
 `out` must be valid.
 */
enum AttrinvStatus attrinv_fid(const double *real,
                               uintptr_t n_real,
                               const double *generated,
                               uintptr_t n_generated,
                               uintptr_t dim,
                               double epsilon,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTRINV_H */
