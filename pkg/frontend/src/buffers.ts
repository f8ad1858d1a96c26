/** Vertex buffer wire format: base64 of little-endian float32 triplets. */

export function decodeVertices(data: string): Float32Array {
  const binary = atob(data);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  // the wire format is little-endian; typed arrays follow the platform,
  // so swap explicitly on big-endian hosts
  if (!isLittleEndian()) {
    for (let i = 0; i < bytes.length; i += 4) {
      [bytes[i], bytes[i + 3]] = [bytes[i + 3], bytes[i]];
      [bytes[i + 1], bytes[i + 2]] = [bytes[i + 2], bytes[i + 1]];
    }
  }
  return new Float32Array(bytes.buffer);
}

export function encodeVertices(values: Float32Array | number[]): string {
  const array = values instanceof Float32Array ? values : new Float32Array(values);
  const bytes = new Uint8Array(array.buffer.slice(0));
  if (!isLittleEndian()) {
    for (let i = 0; i < bytes.length; i += 4) {
      [bytes[i], bytes[i + 3]] = [bytes[i + 3], bytes[i]];
      [bytes[i + 1], bytes[i + 2]] = [bytes[i + 2], bytes[i + 1]];
    }
  }
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

function isLittleEndian(): boolean {
  return new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;
}
