/* Copyright (c) 2026, proxlab developers
 * SPDX-License-Identifier: Apache-2.0
 *
 * C API of the proxlab shared library. A job wraps one command invocation:
 * create it with a command name and a JSON config, run it, then read the
 * summary (or the error) and free it. All strings returned by accessor
 * functions are owned by the job and valid until proxlab_job_free.
 *
 * Commands: gen-data | pretrain | finetune | rl | dpo | eval | report | sweep.
 * Status values double as CLI exit codes.
 */
#ifndef PROXLAB_H
#define PROXLAB_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct proxlab_job proxlab_job;

typedef enum {
  PROXLAB_OK = 0,
  PROXLAB_ERR_CONFIG = 2,        /* invalid config / unknown command or key */
  PROXLAB_ERR_MISSING_INPUT = 3, /* required file absent */
  PROXLAB_ERR_RUNTIME = 4        /* anything else */
} proxlab_status;

/* config_json may be NULL or "" for an all-defaults config. Returns
 * PROXLAB_ERR_CONFIG if command is NULL or out is NULL. On success *out
 * owns the job. Create never runs anything. */
proxlab_status proxlab_job_create(const char* command, const char* config_json,
                                  proxlab_job** out);

/* Executes the command. Idempotent calls are not supported: run once. */
proxlab_status proxlab_job_run(proxlab_job* job);

/* Empty string when no error occurred. */
const char* proxlab_job_error(const proxlab_job* job);

/* JSON summary of a successful run; empty string before run or on failure. */
const char* proxlab_job_summary_json(const proxlab_job* job);

/* Status of the last run (PROXLAB_OK before any run). */
proxlab_status proxlab_job_status(const proxlab_job* job);

void proxlab_job_free(proxlab_job* job);

const char* proxlab_version(void);

#ifdef __cplusplus
}
#endif

#endif /* PROXLAB_H */
