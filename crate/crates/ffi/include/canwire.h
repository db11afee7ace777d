/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CANWIRE_H
#define CANWIRE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. Values are stable.
 */
typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_ARGUMENT = 1,
  CW_STATUS_INVALID_UTF8 = 2,
  /**
   * JSON, scenario, log or frame could not be parsed or was invalid.
   */
  CW_STATUS_INVALID_INPUT = 3,
  /**
   * A command was understood but refused. The reply carries the code.
   */
  CW_STATUS_COMMAND_REJECTED = 4,
  /**
   * Scenario assertions failed. The report is still returned.
   */
  CW_STATUS_ASSERTION_FAILED = 5,
  CW_STATUS_SIMULATION = 6,
  CW_STATUS_BUFFER_TOO_SMALL = 7,
  CW_STATUS_PANIC = 8,
} CwStatus;

/**
 * A simulated bench: vehicle, cluster and, in the mitm topology, the
 * rogue device.
 */
typedef struct CwTestbed CwTestbed;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Empty after success.
 * Valid until the next call on the same thread.
 */
const char *cw_last_error(void);

void cw_string_free(char *s);

/**
 * Creates a bench from scenario JSON, or the default bench (mitm, ignition
 * off) when `scenario_json` is null. Only the setup part of the scenario is
 * used; drive it with `cw_testbed_advance` and `cw_testbed_command`.
 */
enum CwStatus cw_testbed_new(const char *scenario_json, struct CwTestbed **out);

void cw_testbed_free(struct CwTestbed *tb);

/**
 * Current virtual time in microseconds, or 0 for a null handle.
 */
uint64_t cw_testbed_now(const struct CwTestbed *tb);

/**
 * Runs the simulation forward by `dt_us` microseconds.
 */
enum CwStatus cw_testbed_advance(struct CwTestbed *tb, uint64_t dt_us);

/**
 * Applies one command in the control protocol's JSON form and writes the
 * reply JSON to `reply_out`. A reply is written for rejected commands too.
 */
enum CwStatus cw_testbed_command(struct CwTestbed *tb, const char *command_json, char **reply_out);

/**
 * Writes a telemetry message as JSON.
 */
enum CwStatus cw_testbed_telemetry(const struct CwTestbed *tb, char **out);

/**
 * Runs a scenario to completion and writes its report as JSON. Returns
 * `CW_STATUS_ASSERTION_FAILED` with the report when any assertion fails.
 */
enum CwStatus cw_scenario_run(const char *scenario_json, char **report_out);

/**
 * Serializes a data frame to wire bits, one bit per byte (0 dominant,
 * 1 recessive), SOF through EOF with stuffing. `bits_len` receives the
 * length even when the buffer is too small.
 */
enum CwStatus cw_frame_serialize(uint32_t id,
                                 bool extended,
                                 const uint8_t *data,
                                 size_t data_len,
                                 uint8_t *bits,
                                 size_t bits_cap,
                                 size_t *bits_len);

/**
 * CAN CRC-15 over `len` bits, one bit per byte (nonzero is 1).
 */
uint16_t cw_crc15(const uint8_t *bits, size_t len);

/**
 * Estimates message periods from candump-style log text, timed or not,
 * and writes the estimates as a JSON array.
 */
enum CwStatus cw_infer_periods(const char *log_text,
                               uint32_t ref_id,
                               double ref_period_ms,
                               char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CANWIRE_H */
