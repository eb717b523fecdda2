"""Built-in catalog: 24 microservice patterns with prompt descriptions and cues.

Descriptions paraphrase the commonly published intent of each pattern in the
microservices.io catalog. Detection cues are short hints surfaced to the
detection backend and reused by the rule-based engine.
"""

from __future__ import annotations

DEFAULT_CATALOG_VERSION = "1"

# (id, display_name, category, description, aliases, detection_cues)
DEFAULT_PATTERNS: tuple[tuple[str, str, str, str, tuple[str, ...], tuple[str, ...]], ...] = (
    (
        "service-instance-per-vm",
        "Service instance per VM",
        "deployment",
        "Each service instance runs inside its own dedicated virtual machine. "
        "A VM image is built per service and deployed as an isolated unit.",
        ("instance per virtual machine",),
        ("packer", "ami", "vagrant", "vm image per service"),
    ),
    (
        "service-instance-per-container",
        "Service instance per container",
        "deployment",
        "Each service instance is packaged and run as its own container. "
        "Per-service Dockerfiles and one image per compose service are typical signals.",
        ("instance per container",),
        ("dockerfile", "image per service", "compose service with image or build"),
    ),
    (
        "sidecar",
        "Sidecar",
        "deployment",
        "A helper container is deployed next to the main service container in the "
        "same unit and takes over cross-cutting concerns such as proxying, "
        "log shipping, or configuration reload.",
        (),
        ("second container in a pod", "envoy", "istio-proxy", "proxy container", "agent container"),
    ),
    (
        "service-mesh",
        "Service mesh",
        "communication",
        "All traffic between services flows through a dedicated infrastructure layer "
        "of proxies that provides routing, retries, security, and telemetry without "
        "application code changes.",
        (),
        ("istio", "linkerd", "mesh gateway", "sidecar injection"),
    ),
    (
        "service-deployment-platform",
        "Service deployment platform",
        "deployment",
        "Services are deployed through a platform that abstracts individual machines "
        "and offers declarative deployment, scheduling, and service operations, "
        "for example Kubernetes or a PaaS.",
        (),
        ("apiVersion", "kind: Deployment", "kubernetes manifest", "helm chart"),
    ),
    (
        "single-service-per-host",
        "Single service per host",
        "deployment",
        "Each host runs exactly one service instance, isolating services from each "
        "other at the machine level.",
        (),
        ("dedicated host per service", "one service per machine"),
    ),
    (
        "multiple-services-per-host",
        "Multiple services per host",
        "deployment",
        "Several service instances share one host, trading isolation for density "
        "and lower infrastructure cost.",
        (),
        ("several services on one machine", "shared host"),
    ),
    (
        "serverless-deployment",
        "Serverless deployment",
        "deployment",
        "Service code is handed to a serverless platform that runs it on demand, "
        "without provisioning or managing servers.",
        ("faas",),
        ("serverless.yml", "AWS::Lambda::Function", "cloud function", "function app"),
    ),
    (
        "client-side-discovery",
        "Client-side discovery",
        "discovery",
        "Clients query the service registry themselves and pick an instance to call, "
        "typically applying client-side load balancing.",
        ("client side discovery",),
        ("ribbon", "client load balancing", "registry lookup in client configuration"),
    ),
    (
        "self-registration",
        "Self-registration",
        "discovery",
        "Service instances register themselves with the service registry on startup "
        "and deregister on shutdown, often alongside a heartbeat.",
        ("self registration",),
        ("register on startup", "registration block in service config", "consul agent"),
    ),
    (
        "service-registry",
        "Service registry",
        "discovery",
        "A database of available service instances and their network locations that "
        "other components query to route requests.",
        (),
        ("eureka", "consul", "zookeeper", "etcd", "nacos"),
    ),
    (
        "server-side-discovery",
        "Server-side service discovery",
        "discovery",
        "Clients send requests to a router or load balancer, which queries the "
        "registry and forwards each request to an available instance.",
        ("server-side discovery", "server side discovery"),
        ("load balancer backed by a registry", "router service", "elb"),
    ),
    (
        "third-party-registration",
        "3rd party registration",
        "discovery",
        "A separate registrar process, not the service itself, registers and "
        "deregisters service instances with the registry.",
        ("third party registration", "third-party registration"),
        ("registrator", "external registrar"),
    ),
    (
        "api-gateway",
        "API gateway",
        "communication",
        "A single entry point receives all external requests and routes them to "
        "internal services, optionally aggregating results or translating protocols. "
        "Per-client variants of the entry point are known as backends for frontends.",
        (
            "API gateway/Backends for frontends",
            "API gateway/Backend for frontends",
            "Backends for frontends",
            "Backend for frontends",
            "bff",
        ),
        ("zuul", "kong", "traefik", "spring cloud gateway", "nginx proxy_pass"),
    ),
    (
        "circuit-breaker",
        "Circuit breaker",
        "reliability",
        "Remote calls go through a proxy that counts failures and, after a threshold, "
        "fails fast until the downstream service recovers.",
        (),
        ("hystrix", "resilience4j", "circuit breaker configuration"),
    ),
    (
        "remote-procedure-invocation",
        "Remote procedure invocation",
        "communication",
        "Services communicate through synchronous request/response protocols such as "
        "gRPC, Thrift, or plain HTTP APIs.",
        ("rpc",),
        ("grpc", "thrift", "proto file", "rest endpoint"),
    ),
    (
        "messaging",
        "Messaging",
        "communication",
        "Services exchange messages over asynchronous channels provided by a broker "
        "or queueing system.",
        (),
        ("kafka", "rabbitmq", "amqp", "nats", "activemq"),
    ),
    (
        "log-deployments-and-changes",
        "Log deployments and changes",
        "observability",
        "Every deployment and infrastructure change is recorded so that changes in "
        "behavior can be correlated with releases.",
        (),
        ("deployment annotations", "release tracking hooks"),
    ),
    (
        "log-aggregation",
        "Log aggregation",
        "observability",
        "Logs from all service instances are shipped to a central store where they "
        "can be searched and correlated.",
        (),
        ("elasticsearch", "logstash", "fluentd", "loki", "centralized logging"),
    ),
    (
        "health-check-api",
        "Health check API",
        "observability",
        "Each service exposes an endpoint that reports its own health, polled by "
        "orchestrators and load balancers to gate traffic.",
        ("health check",),
        ("healthcheck", "livenessProbe", "readinessProbe", "/health endpoint"),
    ),
    (
        "application-metrics",
        "Application metrics",
        "observability",
        "Services publish operational metrics that are scraped or pushed into a "
        "central metrics service for dashboards and alerting.",
        (),
        ("prometheus", "metrics endpoint", "grafana", "statsd"),
    ),
    (
        "audit-logging",
        "Audit logging",
        "observability",
        "User actions are recorded in a durable audit trail for accountability, "
        "compliance, and later analysis.",
        (),
        ("audit log", "audit trail"),
    ),
    (
        "shared-database",
        "Shared database",
        "data",
        "Multiple services read and write the same database schema, coupling them "
        "through shared data.",
        (),
        ("several services pointing at one database host", "shared schema"),
    ),
    (
        "database-per-service",
        "Database per service",
        "data",
        "Each service owns its database, and other services reach that data only "
        "through the owning service's API.",
        (),
        ("per-service database", "distinct database hosts per service"),
    ),
)
