/** Protocol error codes as sent by the server. */
export const ERR_UNKNOWN_METHOD = -1;
export const ERR_MALFORMED = -2;
export const ERR_DOMAIN = -3;
export const ERR_NO_TARGET = -4;

/**
 * The server answered with an error object. `code` is one of the ERR_*
 * constants above.
 */
export class ServerError extends Error {
    readonly code: number;

    constructor(code: number, message: string) {
        super(message);
        this.name = "ServerError";
        this.code = code;
    }
}

/**
 * The connection stopped behaving like the protocol: unparseable response
 * line, a response id nothing is waiting on, or the socket dropped while
 * calls were in flight. The client is unusable afterwards.
 */
export class ProtocolError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "ProtocolError";
    }
}
