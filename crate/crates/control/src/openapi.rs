//! OpenAPI 3.0 description of the HTTP API.

use serde_json::{json, Value};

/// Every route the service answers, as (method, OpenAPI path).
pub const ROUTES: &[(&str, &str)] = &[
    ("get", "/api/status"),
    ("get", "/api/runs"),
    ("post", "/api/runs"),
    ("get", "/api/runs/{id}"),
    ("delete", "/api/runs/{id}"),
    ("get", "/api/runs/{id}/logs"),
    ("get", "/api/openapi.json"),
    ("get", "/swagger-ui/index.html"),
];

fn json_response(description: &str, schema: &str) -> Value {
    json!({
        "description": description,
        "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{schema}") } } }
    })
}

fn id_param() -> Value {
    json!({ "name": "id", "in": "path", "required": true, "schema": { "type": "string" } })
}

fn impairment_props() -> Value {
    json!({
        "bw": { "type": "string", "description": "bits per second or \"unbounded\"", "example": "10000" },
        "loss": { "type": "number", "minimum": 0, "maximum": 1 },
        "latency": { "type": "integer", "minimum": 0, "description": "milliseconds" },
        "seed": { "type": "integer", "minimum": 0 }
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

pub fn document() -> Value {
    let not_found = json_response("unknown run id", "Error");
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "stgen control API",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Start, inspect and stop core, fleet and client runs; stream their logs."
        },
        "paths": {
            "/api/status": {
                "get": {
                    "operationId": "getStatus",
                    "summary": "Service status and run counts",
                    "responses": { "200": json_response("status", "Status") }
                }
            },
            "/api/runs": {
                "get": {
                    "operationId": "listRuns",
                    "summary": "All runs since the service started",
                    "responses": {
                        "200": {
                            "description": "runs",
                            "content": { "application/json": { "schema": {
                                "type": "array", "items": { "$ref": "#/components/schemas/RunHandle" }
                            } } }
                        }
                    }
                },
                "post": {
                    "operationId": "startRun",
                    "summary": "Start a core, fleet or client run",
                    "description": "Parameters go inside `params` or next to `role`. Validation matches the CLI.",
                    "requestBody": {
                        "required": true,
                        "content": { "application/json": { "schema": { "$ref": "#/components/schemas/RunRequest" } } }
                    },
                    "responses": {
                        "201": json_response("run accepted", "RunHandle"),
                        "400": json_response("invalid parameters", "Error"),
                        "503": json_response("resource limits reached", "Error")
                    }
                }
            },
            "/api/runs/{id}": {
                "parameters": [id_param()],
                "get": {
                    "operationId": "getRun",
                    "summary": "One run",
                    "responses": { "200": json_response("run", "RunHandle"), "404": not_found }
                },
                "delete": {
                    "operationId": "stopRun",
                    "summary": "Ask a run to stop early",
                    "responses": { "202": json_response("stop requested", "RunHandle"), "404": not_found }
                }
            },
            "/api/runs/{id}/logs": {
                "parameters": [
                    id_param(),
                    { "name": "cursor", "in": "query", "required": false,
                      "schema": { "type": "integer", "minimum": 0 },
                      "description": "first line to send; defaults to the oldest retained line" }
                ],
                "get": {
                    "operationId": "streamRunLogs",
                    "summary": "Stream log lines until the run ends",
                    "description": "Chunked text, one line per event. Lines lost to the bounded buffer appear as a `[N lines dropped]` marker.",
                    "responses": {
                        "200": { "description": "log stream", "content": { "text/plain": { "schema": { "type": "string" } } } },
                        "404": not_found
                    }
                }
            },
            "/api/openapi.json": {
                "get": {
                    "operationId": "getOpenApi",
                    "summary": "This document",
                    "responses": { "200": { "description": "OpenAPI document", "content": { "application/json": { "schema": { "type": "object" } } } } }
                }
            },
            "/swagger-ui/index.html": {
                "get": {
                    "operationId": "getApiViewer",
                    "summary": "Browser view of this document",
                    "responses": { "200": { "description": "HTML page", "content": { "text/html": { "schema": { "type": "string" } } } } }
                }
            }
        },
        "components": {
            "schemas": {
                "Error": {
                    "type": "object",
                    "required": ["error"],
                    "properties": { "error": { "type": "string" } }
                },
                "RunState": { "type": "string", "enum": ["starting", "running", "finished", "failed"] },
                "Role": { "type": "string", "enum": ["core", "fleet", "client"] },
                "RunHandle": {
                    "type": "object",
                    "required": ["run_id", "role", "params", "state", "started_at", "log_cursor"],
                    "properties": {
                        "run_id": { "type": "string" },
                        "role": { "$ref": "#/components/schemas/Role" },
                        "params": { "type": "object" },
                        "state": { "$ref": "#/components/schemas/RunState" },
                        "started_at": { "type": "integer", "description": "ms since the Unix epoch" },
                        "finished_at": { "type": "integer" },
                        "log_cursor": { "type": "integer" },
                        "error": { "type": "string" },
                        "summary": { "type": "object" }
                    }
                },
                "CoreParams": {
                    "type": "object",
                    "required": ["sim_time"],
                    "properties": merge(json!({
                        "host": { "type": "string", "default": "127.0.0.1" },
                        "sensor_port": { "type": "integer", "default": 5004 },
                        "client_port": { "type": "integer", "default": 5005 },
                        "sim_time": { "type": "number", "exclusiveMinimum": true, "minimum": 0 },
                        "archive_dir": { "type": "string", "default": "archive" },
                        "capture": { "type": "string", "description": "none, archive, tcp://host:port or a file path" }
                    }), impairment_props())
                },
                "FleetParams": {
                    "type": "object",
                    "required": ["specs"],
                    "properties": merge(json!({
                        "core_host": { "type": "string", "default": "127.0.0.1" },
                        "core_port": { "type": "integer", "default": 5004 },
                        "sim_time": { "type": "number", "default": 60 },
                        "specs": { "type": "array", "minItems": 1,
                                   "items": { "type": "string", "example": "temp:30:1" } },
                        "jitter": { "type": "boolean", "default": false }
                    }), impairment_props())
                },
                "ClientParams": {
                    "type": "object",
                    "required": ["log_dir", "sensor_id"],
                    "properties": {
                        "log_dir": { "type": "string" },
                        "core_host": { "type": "string", "default": "127.0.0.1" },
                        "sensor_id": { "type": "string", "example": "temp_1" },
                        "client_port": { "type": "integer", "default": 5005 },
                        "sim_time": { "type": "number" }
                    }
                },
                "RunRequest": {
                    "type": "object",
                    "required": ["role"],
                    "properties": {
                        "role": { "$ref": "#/components/schemas/Role" },
                        "params": { "oneOf": [
                            { "$ref": "#/components/schemas/CoreParams" },
                            { "$ref": "#/components/schemas/FleetParams" },
                            { "$ref": "#/components/schemas/ClientParams" }
                        ] }
                    },
                    "additionalProperties": true
                },
                "Status": {
                    "type": "object",
                    "required": ["service", "version", "uptime_s", "runs", "limits"],
                    "properties": {
                        "service": { "type": "string" },
                        "version": { "type": "string" },
                        "uptime_s": { "type": "number" },
                        "runs": { "type": "object", "additionalProperties": { "type": "integer" } },
                        "limits": {
                            "type": "object",
                            "properties": {
                                "max_active_runs": { "type": "integer" },
                                "max_active_sockets": { "type": "integer" }
                            }
                        }
                    }
                }
            }
        }
    })
}
